//! Marching-squares level sets and the isoperimetric circularity `4 pi A / P^2`.

use std::collections::HashMap;

use crate::network::NetworkState;
use crate::{Error, Result};

/// A closed polyline through grid-edge crossings, in cell-centre coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<(f64, f64)>,
}

impl Contour {
    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                (x1 - x0).hypot(y1 - y0)
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Circularity {
    Region { value: f64, area: f64, perimeter: f64 },
    /// Nothing reaches the threshold.
    NoRegion,
}

impl Circularity {
    pub fn value(&self) -> Option<f64> {
        match self {
            Circularity::Region { value, .. } => Some(*value),
            Circularity::NoRegion => None,
        }
    }
}

/// Grid edge holding a crossing: horizontal edges join `(x, y)` and
/// `(x + 1, y)`, vertical ones `(x, y)` and `(x, y + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Edge {
    H(i32, i32),
    V(i32, i32),
}

/// Extracts every closed iso-line of `field` at `level`.
///
/// Samples sit at integer coordinates; the field is treated as surrounded by a
/// one-sample border below `level`, so every contour closes. Saddle cells are
/// resolved by the cell's mean value.
pub fn contours(field: &[f64], width: usize, height: usize, level: f64) -> Vec<Contour> {
    assert_eq!(field.len(), width * height, "field size does not match {width}x{height}");
    let min = field.iter().copied().fold(level, f64::min);
    let outside = min - 1.0;
    let (w, h) = (width as i32, height as i32);
    let sample = |x: i32, y: i32| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            outside
        } else {
            field[y as usize * width + x as usize]
        }
    };
    let crossing = |e: Edge| -> (f64, f64) {
        let ((x0, y0), (x1, y1)) = match e {
            Edge::H(x, y) => ((x, y), (x + 1, y)),
            Edge::V(x, y) => ((x, y), (x, y + 1)),
        };
        let (a, b) = (sample(x0, y0), sample(x1, y1));
        let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
        (x0 as f64 + t * (x1 - x0) as f64, y0 as f64 + t * (y1 - y0) as f64)
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for y in -1..h {
        for x in -1..w {
            let v = [sample(x, y), sample(x + 1, y), sample(x + 1, y + 1), sample(x, y + 1)];
            let inside = v.map(|s| s >= level);
            let case = inside.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i));
            let top = Edge::H(x, y);
            let right = Edge::V(x + 1, y);
            let bottom = Edge::H(x, y + 1);
            let left = Edge::V(x, y);
            // bit 0: top-left, 1: top-right, 2: bottom-right, 3: bottom-left
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, top)),
                2 | 13 => segments.push((top, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, bottom)),
                6 | 9 => segments.push((top, bottom)),
                7 | 8 => segments.push((left, bottom)),
                5 | 10 => {
                    let centre_inside = v.iter().sum::<f64>() / 4.0 >= level;
                    // case 5: top-left and bottom-right inside
                    if (case == 5) == centre_inside {
                        segments.push((left, bottom));
                        segments.push((top, right));
                    } else {
                        segments.push((left, top));
                        segments.push((right, bottom));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::with_capacity(segments.len() * 2);
    for (i, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(i);
        by_edge.entry(*b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut edge) = segments[start];
        let mut points = vec![crossing(first)];
        let mut closed = false;
        loop {
            if edge == first {
                closed = true;
                break;
            }
            points.push(crossing(edge));
            let next = by_edge[&edge].iter().copied().find(|&s| !used[s]);
            let Some(seg) = next else { break };
            used[seg] = true;
            let (a, b) = segments[seg];
            edge = if a == edge { b } else { a };
        }
        if closed && points.len() >= 3 {
            out.push(Contour { points });
        }
    }
    out
}

/// Circularity of the largest region of `field` at or above `threshold` times
/// the field's maximum.
pub fn circularity_of_field(field: &[f64], width: usize, height: usize, threshold: f64) -> Result<Circularity> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold", format!("{threshold} is not in (0, 1)")));
    }
    let max = field.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Circularity::NoRegion);
    }
    let largest = contours(field, width, height, threshold * max)
        .into_iter()
        .map(|c| (c.area(), c))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    Ok(match largest {
        Some((area, c)) if area > 0.0 => {
            let perimeter = c.perimeter();
            Circularity::Region { value: 4.0 * std::f64::consts::PI * area / (perimeter * perimeter), area, perimeter }
        }
        _ => Circularity::NoRegion,
    })
}

/// [`circularity_of_field`] over a grid state's storage.
pub fn circularity(state: &NetworkState, threshold: f64) -> Result<Circularity> {
    let topo = state.topology();
    if !topo.is_grid() {
        return Err(Error::invalid("topology", "circularity needs a 2D grid"));
    }
    let (w, h) = topo.frame_dims();
    circularity_of_field(state.storage(), w, h, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Anti-aliased disc: each cell holds the fraction of its 8x8 subsamples
    /// inside the circle.
    fn disc(size: usize, cx: f64, cy: f64, r: f64) -> Vec<f64> {
        let mut f = vec![0.0; size * size];
        for y in 0..size {
            for x in 0..size {
                let mut hits = 0;
                for sy in 0..8 {
                    for sx in 0..8 {
                        let px = x as f64 - 0.5 + (sx as f64 + 0.5) / 8.0;
                        let py = y as f64 - 0.5 + (sy as f64 + 0.5) / 8.0;
                        if (px - cx).hypot(py - cy) <= r {
                            hits += 1;
                        }
                    }
                }
                f[y * size + x] = hits as f64 / 64.0;
            }
        }
        f
    }

    fn square(size: usize, x0: usize, side: usize) -> Vec<f64> {
        let mut f = vec![0.0; size * size];
        for y in x0..x0 + side {
            for x in x0..x0 + side {
                f[y * size + x] = 1.0;
            }
        }
        f
    }

    #[test]
    fn disc_is_nearly_circular() {
        let f = disc(128, 64.0, 64.0, 30.0);
        let c = circularity_of_field(&f, 128, 128, 0.5).unwrap();
        let v = c.value().unwrap();
        assert!(v >= 0.95, "{c:?}");
        let Circularity::Region { area, .. } = c else { unreachable!() };
        assert!((area - std::f64::consts::PI * 900.0).abs() / (std::f64::consts::PI * 900.0) < 0.01);
    }

    #[test]
    fn square_is_pi_over_four() {
        let f = square(128, 40, 40);
        let v = circularity_of_field(&f, 128, 128, 0.5).unwrap().value().unwrap();
        assert!((v - std::f64::consts::FRAC_PI_4).abs() <= 0.03, "{v}");
    }

    #[test]
    fn hand_computed_square_contour() {
        // 2x2 block of ones in a 4x4 field at level 0.5: crossings sit half
        // way between cells, corners are cut diagonally.
        let f = square(4, 1, 2);
        let cs = contours(&f, 4, 4, 0.5);
        assert_eq!(cs.len(), 1);
        assert!((cs[0].area() - 3.5).abs() < 1e-12);
        assert!((cs[0].perimeter() - (4.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn largest_region_wins() {
        let mut f = disc(64, 20.0, 20.0, 10.0);
        for (i, v) in square(64, 45, 4).iter().enumerate() {
            f[i] += v;
        }
        let c = circularity_of_field(&f, 64, 64, 0.5).unwrap();
        assert!(c.value().unwrap() > 0.95);
    }

    #[test]
    fn empty_field_has_no_region() {
        let f = vec![0.0; 100];
        assert_eq!(circularity_of_field(&f, 10, 10, 0.5).unwrap(), Circularity::NoRegion);
        assert!(circularity_of_field(&f, 10, 10, 1.0).is_err());
    }

    #[test]
    fn border_touching_regions_close() {
        let f = vec![1.0; 25];
        let cs = contours(&f, 5, 5, 0.5);
        assert_eq!(cs.len(), 1);
        assert!(cs[0].area() > 16.0);
    }
}
