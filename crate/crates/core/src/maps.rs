//! Kinetic maps: curves from `[0, 1]` onto `[0, 1]` applied pointwise to ranks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inputs this far outside `[0, 1]` are clamped instead of rejected.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

/// Serializable description of a kinetic map.
///
/// This is the form maps take in scenario documents and steering messages.
/// [`KineticMap::from_spec`] validates it and precomputes whatever evaluation
/// needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Negative,
    Gamma { gamma: f64 },
    Gain { k: f64 },
    PiecewiseLinear { points: Vec<[f64; 2]> },
    Spline { points: Vec<[f64; 2]>, order: u8 },
}

/// A validated kinetic map.
#[derive(Clone, Debug, PartialEq)]
pub enum KineticMap {
    Identity,
    /// `1 - r`.
    Negative,
    /// `r^gamma`.
    Gamma(f64),
    /// `min(k * r, 1)`.
    Gain(f64),
    PiecewiseLinear(Curve),
    Spline(Curve),
}

/// Control points plus Hermite slopes for an interpolating curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    xs: Arc<[f64]>,
    ys: Arc<[f64]>,
    slopes: Arc<[f64]>,
    order: u8,
}

impl KineticMap {
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        match spec {
            MapSpec::Identity => Ok(KineticMap::Identity),
            MapSpec::Negative => Ok(KineticMap::Negative),
            MapSpec::Gamma { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::invalid("map.gamma", format!("{gamma} is not a positive finite number")));
                }
                Ok(KineticMap::Gamma(*gamma))
            }
            MapSpec::Gain { k } => {
                if !(k.is_finite() && *k > 0.0) {
                    return Err(Error::invalid("map.k", format!("{k} is not a positive finite number")));
                }
                Ok(KineticMap::Gain(*k))
            }
            MapSpec::PiecewiseLinear { points } => {
                Ok(KineticMap::PiecewiseLinear(Curve::new(points, 1)?))
            }
            MapSpec::Spline { points, order } => make_spline(points, *order),
        }
    }

    pub fn spec(&self) -> MapSpec {
        match self {
            KineticMap::Identity => MapSpec::Identity,
            KineticMap::Negative => MapSpec::Negative,
            KineticMap::Gamma(gamma) => MapSpec::Gamma { gamma: *gamma },
            KineticMap::Gain(k) => MapSpec::Gain { k: *k },
            KineticMap::PiecewiseLinear(curve) => MapSpec::PiecewiseLinear { points: curve.points() },
            KineticMap::Spline(curve) => MapSpec::Spline { points: curve.points(), order: curve.order },
        }
    }

    /// Evaluates the map at a rank.
    ///
    /// Ranks within [`DOMAIN_TOLERANCE`] of the unit interval are clamped onto
    /// it; anything further out, or NaN, is a domain error.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&r) {
            return Err(Error::Domain(format!("rank {r} outside [0, 1]")));
        }
        Ok(self.value_at(r.clamp(0.0, 1.0)))
    }

    /// Evaluation without the domain check. `r` must already lie in `[0, 1]`.
    #[inline]
    pub fn value_at(&self, r: f64) -> f64 {
        let v = match self {
            KineticMap::Identity => r,
            KineticMap::Negative => 1.0 - r,
            KineticMap::Gamma(gamma) => {
                if *gamma == 1.0 {
                    r
                } else if *gamma == 0.5 {
                    r.sqrt()
                } else {
                    r.powf(*gamma)
                }
            }
            KineticMap::Gain(k) => k * r,
            KineticMap::PiecewiseLinear(curve) | KineticMap::Spline(curve) => curve.eval(r),
        };
        v.clamp(0.0, 1.0)
    }
}

impl std::fmt::Display for KineticMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KineticMap::Identity => write!(f, "identity"),
            KineticMap::Negative => write!(f, "negative"),
            KineticMap::Gamma(g) => write!(f, "gamma({g})"),
            KineticMap::Gain(k) => write!(f, "gain({k})"),
            KineticMap::PiecewiseLinear(c) => write!(f, "piecewise_linear({} points)", c.xs.len()),
            KineticMap::Spline(c) => write!(f, "spline(order {}, {} points)", c.order, c.xs.len()),
        }
    }
}

/// Builds an interpolating spline through `points`.
///
/// Order 1 is linear interpolation. Orders 2 and 3 are monotonicity-preserving
/// cubic Hermite curves: order 2 uses centred three-point slopes clipped by the
/// Fritsch-Carlson limit, order 3 uses Fritsch-Butland harmonic-mean slopes
/// (the PCHIP rule). Outside the first and last control point the curve is held
/// at the nearest endpoint's `y`.
pub fn make_spline(points: &[[f64; 2]], order: u8) -> Result<KineticMap> {
    Ok(KineticMap::Spline(Curve::new(points, order)?))
}

impl Curve {
    fn new(points: &[[f64; 2]], order: u8) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::invalid("map.order", format!("{order} is not in 1..=3")));
        }
        let needed = order as usize + 1;
        if points.len() < needed {
            return Err(Error::invalid(
                "map.points",
                format!("order {order} needs at least {needed} control points, got {}", points.len()),
            ));
        }
        for (i, &[x, y]) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(Error::invalid(format!("map.points[{i}]"), format!("({x}, {y}) lies outside the unit square")));
            }
            if i > 0 && x <= points[i - 1][0] {
                return Err(Error::invalid(
                    format!("map.points[{i}]"),
                    format!("x = {x} does not increase on the previous point's x = {}", points[i - 1][0]),
                ));
            }
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let slopes = match order {
            1 => Vec::new(),
            2 => centred_slopes(&xs, &ys),
            _ => pchip_slopes(&xs, &ys),
        };
        Ok(Curve { xs: xs.into(), ys: ys.into(), slopes: slopes.into(), order })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.xs.iter().zip(self.ys.iter()).map(|(&x, &y)| [x, y]).collect()
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // xs[i] < x < xs[i + 1]
        let i = self.xs.partition_point(|&xi| xi <= x) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        if self.order == 1 {
            return y0 + t * (y1 - y0);
        }
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }
}

fn secants(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = ys.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / h).collect();
    (h, delta)
}

fn centred_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let (h, delta) = secants(xs, ys);
    let n = xs.len();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a * b <= 0.0 {
            continue;
        }
        let centred = (h[i] * a + h[i - 1] * b) / (h[i - 1] + h[i]);
        let limit = 3.0 * a.abs().min(b.abs());
        d[i] = centred.signum() * centred.abs().min(limit);
    }
    d
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let (h, delta) = secants(xs, ys);
    let n = xs.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a * b <= 0.0 {
            continue;
        }
        let w1 = 2.0 * h[i] + h[i - 1];
        let w2 = h[i] + 2.0 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / a + w2 / b);
    }
    d[0] = pchip_end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// One-sided three-point end slope, kept shape-preserving.
fn pchip_end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// A piecewise-constant sequence of maps keyed by the step they take effect.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSchedule {
    entries: Vec<(u64, KineticMap)>,
}

impl MapSchedule {
    pub fn new(entries: Vec<(u64, KineticMap)>) -> Result<Self> {
        match entries.first() {
            None => return Err(Error::invalid("maps", "schedule is empty")),
            Some((first, _)) if *first != 0 => {
                return Err(Error::invalid("maps[0].from_step", format!("first entry starts at {first}, not 0")))
            }
            _ => {}
        }
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::invalid(
                    format!("maps[{}].from_step", i + 1),
                    format!("{} does not increase on {}", pair[1].0, pair[0].0),
                ));
            }
        }
        Ok(MapSchedule { entries })
    }

    pub fn constant(map: KineticMap) -> Self {
        MapSchedule { entries: vec![(0, map)] }
    }

    pub fn from_specs(entries: &[(u64, MapSpec)]) -> Result<Self> {
        let maps = entries
            .iter()
            .enumerate()
            .map(|(i, (from, spec))| {
                KineticMap::from_spec(spec)
                    .map(|m| (*from, m))
                    .map_err(|e| prefix_field(e, &format!("maps[{i}]")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(maps)
    }

    /// The map of the last entry whose `from_step` is at most `step`.
    pub fn lookup(&self, step: u64) -> &KineticMap {
        let idx = self.entries.partition_point(|(from, _)| *from <= step);
        &self.entries[idx - 1].1
    }

    /// Drops every entry at or after `from_step` and appends `map` there.
    pub fn replace_tail(&mut self, from_step: u64, map: KineticMap) {
        self.entries.retain(|(from, _)| *from < from_step);
        self.entries.push((from_step, map));
    }

    pub fn entries(&self) -> &[(u64, KineticMap)] {
        &self.entries
    }

    pub fn specs(&self) -> Vec<(u64, MapSpec)> {
        self.entries.iter().map(|(from, m)| (*from, m.spec())).collect()
    }
}

fn prefix_field(err: Error, prefix: &str) -> Error {
    match err {
        Error::Validation { field, reason } => {
            let field = field.strip_prefix("map").unwrap_or(&field).to_string();
            Error::Validation { field: format!("{prefix}{field}"), reason }
        }
        other => other,
    }
}
