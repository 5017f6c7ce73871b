//! Procedural letterforms for the text-restoration experiments: a 5x7
//! bitmap font, scaled up, drawn as dark ink `-M` on a `0` background, and
//! damaged by seeded pixel dropouts and speckles.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{GridSpec, ScalarField};
use crate::{Error, Result};

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

fn bitmap(c: char) -> Option<[&'static str; GLYPH_H]> {
    Some(match c {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'B' => ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
        'C' => [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'U' => ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"],
        'X' => ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        ' ' => [".....", ".....", ".....", ".....", ".....", ".....", "....."],
        _ => return None,
    })
}

/// Ink mask for `text` (lines separated by `\n`), each font pixel drawn as a
/// `scale x scale` block, centred on the smallest square canvas that leaves
/// `margin` pixels around the text.
pub fn glyph_mask(text: &str, scale: usize, margin: usize) -> Result<Array2<bool>> {
    if scale == 0 {
        return Err(Error::invalid("scale", "must be at least 1"));
    }
    let lines: Vec<Vec<[&str; GLYPH_H]>> = text
        .to_uppercase()
        .lines()
        .map(|line| {
            line.chars()
                .map(|c| bitmap(c).ok_or_else(|| Error::invalid("text", format!("no glyph for {c:?}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let longest = lines.iter().map(|l| l.len()).max().unwrap_or(0);
    if longest == 0 {
        return Err(Error::invalid("text", "nothing to draw"));
    }
    // one blank font column between letters, two blank rows between lines
    let text_w = (longest * (GLYPH_W + 1) - 1) * scale;
    let text_h = (lines.len() * (GLYPH_H + 2) - 2) * scale;
    let n = text_w.max(text_h) + 2 * margin;
    let (off_j, off_i) = ((n - text_w) / 2, (n - text_h) / 2);
    let mut mask = Array2::from_elem((n, n), false);
    for (li, line) in lines.iter().enumerate() {
        for (ci, rows) in line.iter().enumerate() {
            for (r, row) in rows.iter().enumerate() {
                for (c, px) in row.bytes().enumerate() {
                    if px != b'#' {
                        continue;
                    }
                    let i0 = off_i + (li * (GLYPH_H + 2) + r) * scale;
                    let j0 = off_j + (ci * (GLYPH_W + 1) + c) * scale;
                    for di in 0..scale {
                        for dj in 0..scale {
                            mask[[i0 + di, j0 + dj]] = true;
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Clean glyph field on the pixel grid: `-depth` on ink.
pub fn render_glyphs(text: &str, scale: usize, margin: usize, depth: f64) -> Result<ScalarField> {
    let mask = glyph_mask(text, scale, margin)?;
    let grid = GridSpec::pixel(mask.nrows())?;
    ScalarField::new(grid, mask.mapv(|ink| if ink { -depth } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    /// Probability that an ink pixel is lost.
    pub dropout: f64,
    /// Probability that a background pixel is inked.
    pub speckle: f64,
    pub seed: u64,
}

/// Flips pixels of a two-level `{-depth, 0}` image independently.
pub fn corrupt(clean: &ScalarField, corruption: &Corruption, depth: f64) -> Result<ScalarField> {
    for (name, p) in [("dropout", corruption.dropout), ("speckle", corruption.speckle)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("probability must lie in [0, 1], got {p}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(corruption.seed);
    let values = clean.values().mapv(|v| {
        let ink = v < -0.5 * depth;
        let draw: f64 = rng.random();
        match (ink, draw < if ink { corruption.dropout } else { corruption.speckle }) {
            (true, true) => 0.0,
            (false, true) => -depth,
            (true, false) => -depth,
            (false, false) => 0.0,
        }
    });
    ScalarField::new(*clean.grid(), values)
}
