//! Marching squares on the bilinear interpolant.
//!
//! A sample counts as "above" when `u > level`. Cells whose four corners
//! alternate (saddles) are resolved by comparing the cell average with the
//! level: if the average is above, the two above corners are treated as
//! connected through the cell centre.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::grid::{GridSpec, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub level: f64,
    /// Closed curves repeat their first point at the end.
    pub polylines: Vec<Vec<(f64, f64)>>,
}

impl ContourSet {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn closed_count(&self) -> usize {
        self.polylines.iter().filter(|p| is_closed(p)).count()
    }

    /// Total length with `|dx₁| + |dx₂|` per segment.
    pub fn l1_length(&self) -> f64 {
        self.length_with(|a, b| a.abs() + b.abs())
    }

    /// Total length with `max(|dx₁|, |dx₂|)` per segment.
    pub fn linf_length(&self) -> f64 {
        self.length_with(|a, b| a.abs().max(b.abs()))
    }

    pub fn euclidean_length(&self) -> f64 {
        self.length_with(f64::hypot)
    }

    fn length_with(&self, norm: impl Fn(f64, f64) -> f64) -> f64 {
        self.polylines
            .iter()
            .flat_map(|p| p.windows(2))
            .map(|w| norm(w[1].0 - w[0].0, w[1].1 - w[0].1))
            .sum()
    }

    /// One `x y` pair per line, a blank line between polylines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, line) in self.polylines.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            for (x, y) in line {
                writeln!(out, "{x} {y}").unwrap();
            }
        }
        out
    }

    /// Standalone SVG drawing of the curves over the domain square.
    pub fn to_svg(&self, grid: &GridSpec) -> String {
        let l = grid.half_width();
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="512" height="512">"#,
            -l,
            -l,
            2.0 * l,
            2.0 * l
        )
        .unwrap();
        writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="black" stroke-width="{}"/>"#,
            -l,
            -l,
            2.0 * l,
            2.0 * l,
            grid.spacing()
        )
        .unwrap();
        for line in &self.polylines {
            let pts: Vec<String> = line.iter().map(|(x, y)| format!("{x},{}", -y)).collect();
            writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="{}"/>"#,
                pts.join(" "),
                grid.spacing()
            )
            .unwrap();
        }
        out.push_str("</svg>\n");
        out
    }
}

fn is_closed(p: &[(f64, f64)]) -> bool {
    p.len() > 2 && p.first() == p.last()
}

/// Edge identifiers: horizontal edge `(i, j)-(i, j+1)` and vertical edge
/// `(i, j)-(i+1, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

pub fn extract_contours(u: &ScalarField, level: f64) -> ContourSet {
    let grid = u.grid();
    let n = grid.n();
    let v = u.values();
    let above = |i: usize, j: usize| v[[i, j]] > level;

    let crossing = |e: Edge| -> (f64, f64) {
        let ((ia, ja), (ib, jb)) = match e {
            Edge::H(i, j) => ((i, j), (i, j + 1)),
            Edge::V(i, j) => ((i, j), (i + 1, j)),
        };
        let (va, vb) = (v[[ia, ja]], v[[ib, jb]]);
        let t = (level - va) / (vb - va);
        let (xa, ya) = grid.coords(ia, ja);
        let (xb, yb) = grid.coords(ib, jb);
        (xa + t * (xb - xa), ya + t * (yb - ya))
    };

    // segments as pairs of edges
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            // corners clockwise from top-left; edge k joins corner k and k+1
            let c = [above(i, j), above(i, j + 1), above(i + 1, j + 1), above(i + 1, j)];
            let edges = [Edge::H(i, j), Edge::V(i, j + 1), Edge::H(i + 1, j), Edge::V(i, j)];
            let cut: Vec<usize> = (0..4).filter(|&k| c[k] != c[(k + 1) % 4]).collect();
            match cut.len() {
                0 => {}
                2 => segments.push((edges[cut[0]], edges[cut[1]])),
                4 => {
                    let avg = (v[[i, j]] + v[[i, j + 1]] + v[[i + 1, j + 1]] + v[[i + 1, j]]) / 4.0;
                    let centre_above = avg > level;
                    // isolate each corner whose class differs from the centre
                    for k in 0..4 {
                        if c[k] != centre_above {
                            segments.push((edges[(k + 3) % 4], edges[k]));
                        }
                    }
                }
                _ => unreachable!("a cell cannot have an odd number of crossings"),
            }
        }
    }

    let mut incident: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(k);
        incident.entry(*b).or_default().push(k);
    }

    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    let trace = |start_edge: Edge, first_seg: usize, used: &mut Vec<bool>| -> Vec<(f64, f64)> {
        let mut pts = vec![crossing(start_edge)];
        let mut edge = start_edge;
        let mut seg = Some(first_seg);
        while let Some(s) = seg {
            used[s] = true;
            let (a, b) = segments[s];
            edge = if a == edge { b } else { a };
            pts.push(crossing(edge));
            seg = incident[&edge].iter().copied().find(|&k| !used[k]);
        }
        pts
    };

    // open curves start at boundary edges, which have a single segment
    let ends: Vec<Edge> = incident
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    for e in ends {
        let s = incident[&e][0];
        if !used[s] {
            polylines.push(trace(e, s, &mut used));
        }
    }
    for k in 0..segments.len() {
        if !used[k] {
            let start = segments[k].0;
            let mut line = trace(start, k, &mut used);
            // loops return to the start edge, which closes the curve
            if line.first() != line.last() {
                let first = line[0];
                line.push(first);
            }
            polylines.push(line);
        }
    }

    ContourSet { level, polylines }
}
