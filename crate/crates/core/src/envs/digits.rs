use super::Dataset;
use crate::rng::{normal, Rng};

const GLYPHS: [[&str; 8]; 10] = [
    ["..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#", ".#....#.", "..####.."],
    ["...##...", "..###...", ".#.##...", "...##...", "...##...", "...##...", "...##...", ".######."],
    ["..####..", ".#....#.", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".######."],
    [".#####..", "......#.", "......#.", "..####..", "......#.", "......#.", "......#.", ".#####.."],
    ["....##..", "...#.#..", "..#..#..", ".#...#..", "########", ".....#..", ".....#..", ".....#.."],
    [".######.", ".#......", ".#......", ".#####..", "......#.", "......#.", ".#....#.", "..####.."],
    ["..####..", ".#......", "#.......", "#.####..", "##....#.", "#......#", ".#....#.", "..####.."],
    ["########", "......#.", ".....#..", "....#...", "...#....", "..#.....", "..#.....", "..#....."],
    ["..####..", ".#....#.", ".#....#.", "..####..", ".#....#.", "#......#", ".#....#.", "..####.."],
    ["..####..", ".#....#.", "#......#", ".#....##", "..####.#", "......#.", ".....#..", "..###..."],
];

pub const DIGIT_PIXELS: usize = 64;

/// Ten 8×8 glyph classes with additive Gaussian pixel noise, clamped to
/// `[0,1]`. Samples are ordered class by class.
pub fn synthetic_digits(n_per_class: usize, noise: f64, rng: &mut Rng) -> Dataset {
    let mut contexts = Vec::with_capacity(10 * n_per_class);
    let mut labels = Vec::with_capacity(10 * n_per_class);
    for (class, glyph) in GLYPHS.iter().enumerate() {
        let base: Vec<f64> =
            glyph.iter().flat_map(|row| row.bytes().map(|b| if b == b'#' { 1.0 } else { 0.0 })).collect();
        for _ in 0..n_per_class {
            let x = if noise == 0.0 {
                base.clone()
            } else {
                base.iter().map(|&p| (p + noise * normal(rng)).clamp(0.0, 1.0)).collect()
            };
            contexts.push(x);
            labels.push(class);
        }
    }
    Dataset { contexts, labels, classes: 10 }
}
