//! Dense grid types and the bilinear sampling kernel.
//!
//! Every grid is stored row-major with interleaved channels in `f32`:
//! the value of channel `c` at pixel `(x, y)` lives at
//! `(y * width + x) * channels + c`.

use crate::error::{invalid, Result};

/// Tolerance on the per-pixel probability sum of a [`ProbMap`].
pub const PROB_SUM_TOLERANCE: f32 = 1e-5;

/// A generic `height x width x channels` grid of `f32` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(invalid(format!(
                "grid dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "grid of {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    /// Builds a grid by evaluating `f(x, y, channel)` at every entry.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Iterates over pixels in row-major order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels)
    }

    pub fn same_extent(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_extent(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_extent(other) {
            Ok(())
        } else {
            Err(invalid(format!(
                "{what}: spatial size {}x{} does not match {}x{}",
                other.width, other.height, self.width, self.height
            )))
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear sample of every channel at sub-pixel `(x, y)`, written to `out`.
    ///
    /// Coordinates outside `[0, W-1] x [0, H-1]` are clamped to the border first.
    pub fn sample_into(&self, x: f32, y: f32, out: &mut [f32]) -> Result<()> {
        if !x.is_finite() || !y.is_finite() {
            return Err(invalid(format!("non-finite sample coordinate ({x}, {y})")));
        }
        debug_assert_eq!(out.len(), self.channels);
        self.sample_unchecked(x, y, out);
        Ok(())
    }

    pub fn sample(&self, x: f32, y: f32) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(x, y, &mut out)?;
        Ok(out)
    }

    #[inline]
    fn sample_unchecked(&self, x: f32, y: f32, out: &mut [f32]) {
        let xc = x.clamp(0.0, (self.width - 1) as f32);
        let yc = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f32;
        let fy = yc - y0 as f32;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w01 = fx * (1.0 - fy);
        let w10 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let p00 = self.pixel(x0, y0);
        let p01 = self.pixel(x1, y0);
        let p10 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        for c in 0..self.channels {
            let (a, b, d, e) = (p00[c], p01[c], p10[c], p11[c]);
            let v = a * w00 + b * w01 + d * w10 + e * w11;
            // rounding must not leave the hull of the four neighbours
            let lo = a.min(b).min(d.min(e));
            let hi = a.max(b).max(d.max(e));
            out[c] = v.clamp(lo, hi);
        }
    }

    /// Backward warp: output pixel `p` is this grid sampled at `p + flow(p)`.
    pub fn warp(&self, flow: &FlowField) -> Result<Grid> {
        self.check_extent(flow.grid(), "warp flow")?;
        let width = self.width;
        let ch = self.channels;
        let mut out = Grid::zeros(self.width, self.height, ch)?;
        for_each_row(&mut out.data, width * ch, |y, row| {
            for x in 0..width {
                let d = flow.at(x, y);
                self.sample_unchecked(
                    x as f32 + d[0],
                    y as f32 + d[1],
                    &mut row[x * ch..(x + 1) * ch],
                );
            }
        });
        Ok(out)
    }
}

/// Runs `f(row_index, row)` over consecutive rows of `data`, in parallel when enabled.
/// Each row is written independently so the result does not depend on scheduling.
pub(crate) fn for_each_row<F>(data: &mut [f32], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| f(y, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| f(y, row));
    }
}

/// Evaluates `f(row_index)` for every row and concatenates the results in row order.
pub(crate) fn collect_rows<T, F>(height: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> Vec<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..height).into_par_iter().flat_map_iter(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..height).flat_map(&f).collect()
    }
}

/// An RGB frame with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Grid);

impl Image {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != 3 {
            return Err(invalid(format!(
                "image must have 3 channels, got {}",
                grid.channels()
            )));
        }
        if let Some(v) = grid
            .data()
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(invalid(format!("image intensity {v} outside [0, 1]")));
        }
        Ok(Self(grid))
    }

    pub fn from_rgb(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(Grid::new(width, height, 3, data)?)
    }

    /// Builds an image from `f(x, y) -> [r, g, b]`, clamping into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::from_rgb(width, height, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let p = self.0.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    /// Mean of the three channels at every pixel.
    pub fn grayscale(&self) -> Vec<f32> {
        self.0
            .pixels()
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    pub fn warp(&self, flow: &FlowField) -> Result<Image> {
        // a convex combination of values in [0, 1] stays in [0, 1]
        Ok(Image(self.0.warp(flow)?))
    }
}

/// Per-pixel class distribution over `K` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap(Grid);

impl ProbMap {
    pub fn new(grid: Grid) -> Result<Self> {
        for (i, p) in grid.pixels().enumerate() {
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid(format!(
                    "probability map pixel {i} has a negative or non-finite entry"
                )));
            }
            let sum: f32 = p.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(invalid(format!(
                    "probability map pixel {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self(grid))
    }

    /// Renormalizes every pixel to sum to one. Pixels with zero mass become uniform.
    pub fn normalized(mut grid: Grid) -> Result<Self> {
        if grid
            .data()
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(invalid("cannot normalize negative or non-finite scores"));
        }
        let k = grid.channels();
        for p in grid.data_mut().chunks_exact_mut(k) {
            normalize_in_place(p);
        }
        Ok(Self(grid))
    }

    /// Uniform `1/K` distribution at every pixel.
    pub fn uniform(width: usize, height: usize, classes: usize) -> Result<Self> {
        let v = 1.0 / classes as f32;
        Ok(Self(Grid::new(
            width,
            height,
            classes,
            vec![v; width * height * classes],
        )?))
    }

    /// Distribution putting `on` on the labeled class and spreading the rest evenly.
    pub fn soft_one_hot(labels: &LabelMap, classes: usize, on: f32) -> Result<Self> {
        labels.check_classes(classes)?;
        if classes < 2 {
            return ProbMap::uniform(labels.width(), labels.height(), classes);
        }
        let off = (1.0 - on) / (classes - 1) as f32;
        let grid = Grid::from_fn(labels.width(), labels.height(), classes, |x, y, c| {
            if labels.get(x, y) as usize == c {
                on
            } else {
                off
            }
        })?;
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn classes(&self) -> usize {
        self.0.channels()
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        self.0.pixel(x, y)
    }

    /// Warps the distribution along `flow` and renormalizes every pixel.
    pub fn warp(&self, flow: &FlowField) -> Result<ProbMap> {
        let mut g = self.0.warp(flow)?;
        let k = g.channels();
        for p in g.data_mut().chunks_exact_mut(k) {
            normalize_in_place(p);
        }
        Ok(ProbMap(g))
    }

    /// Per-pixel index of the most probable class, ties to the lowest index.
    pub fn argmax(&self) -> LabelMap {
        argmax_labels(&self.0)
    }
}

pub(crate) fn normalize_in_place(p: &mut [f32]) {
    let sum: f32 = p.iter().sum();
    if sum > 0.0 {
        p.iter_mut().for_each(|v| *v /= sum);
    } else {
        let u = 1.0 / p.len() as f32;
        p.iter_mut().for_each(|v| *v = u);
    }
}

/// Per-pixel argmax over channels, ties broken toward the lowest channel.
pub fn argmax_labels(scores: &Grid) -> LabelMap {
    let data = scores
        .pixels()
        .map(|p| {
            let mut best = 0;
            for (i, v) in p.iter().enumerate().skip(1) {
                if *v > p[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    LabelMap {
        width: scores.width(),
        height: scores.height(),
        data,
    }
}

/// Per-pixel class indices, `0` being background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("label map dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "label map of {width}x{height} needs {} labels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.data[y * self.width + x] = label;
    }

    /// Largest label present, if any pixel exists.
    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.data.iter().find(|&&l| l as usize >= classes) {
            Some(l) => Err(invalid(format!(
                "label {l} out of range for {classes} classes"
            ))),
            None => Ok(()),
        }
    }

    pub fn same_extent(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Dense per-pixel offsets `(dx, dy)` from a source frame into a target frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField(Grid);

impl FlowField {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(invalid(format!(
                "flow field must have 2 channels, got {}",
                grid.channels()
            )));
        }
        if grid.data().iter().any(|v| !v.is_finite()) {
            return Err(invalid("flow field contains non-finite offsets"));
        }
        Ok(Self(grid))
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Ok(Self(Grid::zeros(width, height, 2)?))
    }

    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Result<Self> {
        Self::new(Grid::from_fn(width, height, 2, |_, _, c| {
            if c == 0 {
                dx
            } else {
                dy
            }
        })?)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 2],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 2);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(Grid::new(width, height, 2, data)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        let p = self.0.pixel(x, y);
        [p[0], p[1]]
    }

    /// Every offset multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> FlowField {
        let mut g = self.0.clone();
        g.data_mut().iter_mut().for_each(|v| *v *= factor);
        FlowField(g)
    }

    /// Euclidean endpoint error against `other` at every pixel.
    pub fn endpoint_errors(&self, other: &FlowField) -> Result<Vec<f32>> {
        self.0.check_extent(&other.0, "endpoint error")?;
        Ok(self
            .0
            .pixels()
            .zip(other.0.pixels())
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .collect())
    }
}

/// Anything resampled along a flow field: images keep their values, probability
/// maps are renormalized afterwards.
pub trait Warp: Sized {
    fn warp(&self, flow: &FlowField) -> Result<Self>;
}

impl Warp for Grid {
    fn warp(&self, flow: &FlowField) -> Result<Self> {
        Grid::warp(self, flow)
    }
}

impl Warp for Image {
    fn warp(&self, flow: &FlowField) -> Result<Self> {
        Image::warp(self, flow)
    }
}

impl Warp for ProbMap {
    fn warp(&self, flow: &FlowField) -> Result<Self> {
        ProbMap::warp(self, flow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f32]) -> Grid {
        Grid::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn sample_midpoint_of_two_pixels() {
        let g = row(&[0.0, 10.0]);
        assert_eq!(g.sample(0.5, 0.0).unwrap(), vec![5.0]);
    }

    #[test]
    fn sample_outside_clamps_to_border() {
        let g = row(&[0.0, 10.0]);
        assert_eq!(g.sample(-3.0, 0.0).unwrap(), vec![0.0]);
        assert_eq!(g.sample(7.5, -2.0).unwrap(), vec![10.0]);
    }

    #[test]
    fn sample_lattice_point_returns_stored_value() {
        let g = Grid::from_fn(4, 3, 2, |x, y, c| (x * 7 + y * 3 + c) as f32 * 0.37).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(g.sample(x as f32, y as f32).unwrap(), g.pixel(x, y));
            }
        }
    }

    #[test]
    fn sample_rejects_non_finite_coordinates() {
        let g = row(&[0.0, 1.0]);
        assert!(g.sample(f32::NAN, 0.0).is_err());
        assert!(g.sample(0.0, f32::INFINITY).is_err());
    }

    #[test]
    fn warp_shape_mismatch_is_an_error() {
        let g = Grid::zeros(3, 3, 1).unwrap();
        let f = FlowField::zeros(3, 2).unwrap();
        assert!(g.warp(&f).is_err());
    }

    #[test]
    fn warp_shifted_image_recovers_original_interior() {
        let w = 12;
        let h = 6;
        let orig = Image::from_fn(w, h, |x, y| {
            let v = ((x * 13 + y * 5) % 11) as f32 / 10.0;
            [v, 1.0 - v, 0.5]
        })
        .unwrap();
        // shifted(x) = orig(x - 2)
        let shifted =
            Image::from_fn(w, h, |x, y| orig.pixel(x.saturating_sub(2), y)).unwrap();
        let back = shifted.warp(&FlowField::uniform(w, h, 2.0, 0.0).unwrap()).unwrap();
        for y in 0..h {
            for x in 0..w - 2 {
                assert_eq!(back.pixel(x, y), orig.pixel(x, y));
            }
        }
    }

    #[test]
    fn warp_probmap_half_pixel_mixes_and_renormalizes() {
        // 2x2, K=2; column 0 = (0.2, 0.8), column 1 = (0.6, 0.4)
        let g = Grid::from_fn(2, 2, 2, |x, _, c| match (x, c) {
            (0, 0) => 0.2,
            (0, 1) => 0.8,
            (1, 0) => 0.6,
            _ => 0.4,
        })
        .unwrap();
        let p = ProbMap::new(g).unwrap();
        let out = p.warp(&FlowField::uniform(2, 2, 0.5, 0.0).unwrap()).unwrap();
        // 0.5*(0.2,0.8) + 0.5*(0.6,0.4) = (0.4, 0.6); sum 1 already
        let px = out.pixel(0, 0);
        assert!((px[0] - 0.4).abs() < 1e-6);
        assert!((px[1] - 0.6).abs() < 1e-6);
        // column 1 samples x=1.5 which clamps to column 1 itself
        assert!((out.pixel(1, 0)[0] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn argmax_picks_largest_and_breaks_ties_low() {
        let g = Grid::new(3, 1, 3, vec![0.1, 0.7, 0.2, 0.5, 0.5, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
            .unwrap();
        let labels = argmax_labels(&g);
        assert_eq!(labels.data(), &[1, 0, 0]);
    }

    #[test]
    fn probmap_rejects_bad_sums() {
        let g = Grid::new(1, 1, 2, vec![0.5, 0.6]).unwrap();
        assert!(ProbMap::new(g).is_err());
        let g = Grid::new(1, 1, 2, vec![-0.1, 1.1]).unwrap();
        assert!(ProbMap::new(g).is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::from_rgb(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Image::from_rgb(1, 1, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn label_map_class_check() {
        let l = LabelMap::new(2, 1, vec![0, 3]).unwrap();
        assert!(l.check_classes(4).is_ok());
        assert!(l.check_classes(3).is_err());
    }
}
