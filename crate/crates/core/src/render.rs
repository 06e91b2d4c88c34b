//! Label visualization: a fixed palette and 50% overlays.

use crate::error::{invalid, Result};
use crate::grid::{Image, LabelMap};

const BASE: [[u8; 3]; 12] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
];

/// Palette color of a class; classes beyond the base table reuse it with a
/// brightness shift so neighbouring indices stay distinguishable.
pub fn class_color(class: u8) -> [u8; 3] {
    let i = class as usize;
    let c = BASE[i % BASE.len()];
    let round = (i / BASE.len()) as u8;
    c.map(|v| v.wrapping_add(round.wrapping_mul(37)))
}

/// RGB8 bytes with each pixel painted in its class color.
pub fn colorize(labels: &LabelMap) -> Vec<u8> {
    labels.data().iter().flat_map(|&l| class_color(l)).collect()
}

/// RGB8 bytes of the frame blended half-and-half with the class colors.
pub fn overlay(frame: &Image, labels: &LabelMap) -> Result<Vec<u8>> {
    if !labels.same_extent(frame.width(), frame.height()) {
        return Err(invalid("labels and frame differ in size"));
    }
    Ok(frame
        .grid()
        .pixels()
        .zip(labels.data())
        .flat_map(|(p, &l)| {
            let c = class_color(l);
            [0, 1, 2].map(|i| ((p[i] * 255.0 + c[i] as f32) * 0.5).round() as u8)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_blends_half() {
        let img = Image::from_fn(2, 1, |_, _| [1.0, 0.0, 0.0]).unwrap();
        let l = LabelMap::new(2, 1, vec![0, 4]).unwrap();
        assert_eq!(overlay(&img, &l).unwrap(), vec![128, 0, 0, 128, 65, 100]);
        assert!(overlay(&img, &LabelMap::filled(1, 1, 0).unwrap()).is_err());
    }

    #[test]
    fn palette_is_distinct_for_small_k() {
        let colors: Vec<_> = (0..24u8).map(class_color).collect();
        for i in 0..colors.len() {
            for j in 0..i {
                assert_ne!(colors[i], colors[j], "{i} vs {j}");
            }
        }
    }
}
