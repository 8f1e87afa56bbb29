//! Directions on the sphere, the great-circle metric, and deterministic
//! equal-area DoA grids on a spherical cap.
//!
//! Angles are radians internally; degrees appear only at external interfaces
//! (CSV, CLI). All constructions are deterministic: the same inputs always
//! produce bit-identical grids.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::format_g17;

/// Absolute slack for angle-range checks, absorbing degree↔radian conversion
/// rounding (≈1 ulp at π) without masking genuinely out-of-range inputs.
const ANGLE_SLACK: f64 = 1e-12;

/// A direction on the unit sphere: polar angle `theta` from +z in `[0, π]`,
/// azimuth `phi` in `[0, 2π)`.
///
/// Both poles are single physical directions: equality ignores `phi` when
/// `theta` is exactly `0` or `π`.
#[derive(Clone, Copy, Debug)]
pub struct Direction {
    theta: f64,
    phi: f64,
}

impl Direction {
    /// Builds a direction from radians, normalizing `phi` into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::invalid("direction angles must be finite"));
        }
        // Snap conversion dust at the domain ends rather than rejecting it.
        let theta = if (-ANGLE_SLACK..0.0).contains(&theta) {
            0.0
        } else if theta > PI && theta <= PI + ANGLE_SLACK {
            PI
        } else {
            theta
        };
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::invalid(format!(
                "theta must lie in [0, pi], got {theta} rad"
            )));
        }
        let mut phi = phi.rem_euclid(TAU);
        // rem_euclid can round a tiny negative input up to exactly 2π.
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi })
    }

    /// Builds a direction from degrees.
    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Polar angle in radians.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Azimuth in radians, normalized to `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Polar angle in degrees.
    pub fn theta_deg(&self) -> f64 {
        self.theta.to_degrees()
    }

    /// Azimuth in degrees in `[0, 360)`.
    pub fn phi_deg(&self) -> f64 {
        self.phi.to_degrees()
    }

    /// Cartesian unit vector (x, y, z).
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = (self.theta.sin(), self.theta.cos());
        let (sp, cp) = (self.phi.sin(), self.phi.cos());
        [st * cp, st * sp, ct]
    }
}

impl PartialEq for Direction {
    fn eq(&self, other: &Self) -> bool {
        if self.theta != other.theta {
            return false;
        }
        // At the poles every azimuth denotes the same physical direction.
        self.theta == 0.0 || self.theta == PI || self.phi == other.phi
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(theta {:.4} deg, phi {:.4} deg)",
            self.theta_deg(),
            self.phi_deg()
        )
    }
}

/// Great-circle (angular) distance between two directions, radians in `[0, π]`.
///
/// Exactly `0.0` when the two arguments denote the same physical direction;
/// the arccos argument is clamped to `[−1, 1]` so rounding can never produce
/// NaN near coincident or antipodal pairs.
pub fn great_circle_distance(a: Direction, b: Direction) -> f64 {
    if a == b {
        // cos²+sin² rounds within an ulp of 1, so the formula would return
        // ≈1e−8 instead of 0 for identical inputs; exact zero is load-bearing
        // for sorting and weighting.
        return 0.0;
    }
    // |Δφ| keeps the expression bit-symmetric under argument swap.
    let dphi = (a.phi - b.phi).abs();
    let c = a.theta.cos() * b.theta.cos() + a.theta.sin() * b.theta.sin() * dphi.cos();
    c.clamp(-1.0, 1.0).acos()
}

/// An ordered set of evaluation directions on the cap `theta_min ≤ θ ≤
/// theta_max`, each carrying a solid-angle quadrature weight in steradians.
#[derive(Clone, Debug, PartialEq)]
pub struct DoAGrid {
    directions: Vec<Direction>,
    cell_weights: Vec<f64>,
    theta_min: f64,
    theta_max: f64,
}

impl DoAGrid {
    /// Assembles a grid from parts, validating every invariant: matching
    /// lengths, directions inside the cap, finite nonnegative weights summing
    /// to the cap solid angle within 1e−9 relative.
    pub fn from_parts(
        directions: Vec<Direction>,
        cell_weights: Vec<f64>,
        theta_min: f64,
        theta_max: f64,
    ) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::validation("grid must contain at least one direction"));
        }
        if directions.len() != cell_weights.len() {
            return Err(Error::validation(format!(
                "{} directions but {} weights",
                directions.len(),
                cell_weights.len()
            )));
        }
        if !(0.0..PI / 2.0 + ANGLE_SLACK).contains(&theta_min) || theta_min >= theta_max {
            return Err(Error::validation("cap bounds must satisfy 0 <= theta_min < theta_max"));
        }
        if theta_max > PI / 2.0 + ANGLE_SLACK {
            return Err(Error::validation("cap must not extend below the horizon"));
        }
        for (i, d) in directions.iter().enumerate() {
            if d.theta() < theta_min - ANGLE_SLACK || d.theta() > theta_max + ANGLE_SLACK {
                return Err(Error::validation(format!(
                    "direction {i} at {d} lies outside the cap bounds"
                )));
            }
        }
        if cell_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("cell weights must be finite and nonnegative"));
        }
        let cap_area = 2.0 * PI * (theta_min.cos() - theta_max.cos());
        let total: f64 = cell_weights.iter().sum();
        if (total - cap_area).abs() > 1e-9 * cap_area {
            return Err(Error::validation(format!(
                "cell weights sum to {total} sr but the cap area is {cap_area} sr"
            )));
        }
        Ok(Self {
            directions,
            cell_weights,
            theta_min,
            theta_max,
        })
    }

    /// Number of directions K.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    /// True when the grid holds no directions (never constructible).
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Directions in grid order.
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Per-direction solid-angle weights, steradians.
    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }

    /// Cap bounds `(theta_min, theta_max)` in radians.
    pub fn theta_bounds(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }

    /// Index of the grid direction closest to `d` (ties to the lower index).
    pub fn nearest_index(&self, d: Direction) -> usize {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, g) in self.directions.iter().enumerate() {
            let dist = great_circle_distance(*g, d);
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }

    /// For every grid point, the indices of its `count` nearest other points
    /// by great-circle distance (ties to the lower index), nearest first.
    pub fn neighbor_table(&self, count: usize) -> Vec<Vec<usize>> {
        let k = self.len();
        let n = count.min(k.saturating_sub(1));
        (0..k)
            .map(|i| {
                let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
                let di = self.directions[i];
                order.sort_by(|&a, &b| {
                    let da = great_circle_distance(di, self.directions[a]);
                    let db = great_circle_distance(di, self.directions[b]);
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                });
                order.truncate(n);
                order
            })
            .collect()
    }

    /// Writes the grid as CSV with header `index,theta_deg,phi_deg,weight_sr`
    /// and 17 significant digits.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("index,theta_deg,phi_deg,weight_sr\n");
        for (i, (d, w)) in self.directions.iter().zip(&self.cell_weights).enumerate() {
            out.push_str(&format!(
                "{i},{},{},{}\n",
                format_g17(d.theta_deg()),
                format_g17(d.phi_deg()),
                format_g17(*w)
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Loads a grid saved by [`DoAGrid::save_csv`]. The cap bounds are not
    /// stored in the CSV and must be supplied; all grid invariants are
    /// re-validated against them.
    pub fn load_csv(path: impl AsRef<Path>, theta_min: f64, theta_max: f64) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim() != "index,theta_deg,phi_deg,weight_sr" {
            return Err(Error::validation(format!(
                "unexpected grid CSV header: {header:?}"
            )));
        }
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::validation(format!(
                    "grid CSV row {} has {} fields, expected 4",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::validation(format!(
                        "grid CSV row {}: cannot parse {what} from {s:?}",
                        lineno + 2
                    ))
                })
            };
            let index: usize = fields[0].trim().parse().map_err(|_| {
                Error::validation(format!("grid CSV row {}: bad index", lineno + 2))
            })?;
            if index != directions.len() {
                return Err(Error::validation(format!(
                    "grid CSV row {}: index {index} out of sequence",
                    lineno + 2
                )));
            }
            let theta_deg = parse(fields[1], "theta_deg")?;
            let phi_deg = parse(fields[2], "phi_deg")?;
            directions.push(Direction::from_degrees(theta_deg, phi_deg)?);
            weights.push(parse(fields[3], "weight_sr")?);
        }
        Self::from_parts(directions, weights, theta_min, theta_max)
    }
}

/// Generates a deterministic equal-area grid of ≈`target_count` directions on
/// the cap `[theta_min, theta_max]` (radians, upper hemisphere).
///
/// Points sit on constant-θ rings. The ring count follows the square-root
/// area heuristic; per-ring point counts apportion the exact ring-band areas
/// by largest remainder, so the weight total telescopes to the cap area and
/// the realized point count equals `target_count` exactly.
pub fn generate_cap_grid(theta_min: f64, theta_max: f64, target_count: usize) -> Result<DoAGrid> {
    if !theta_min.is_finite() || !theta_max.is_finite() {
        return Err(Error::invalid("cap bounds must be finite"));
    }
    if !(0.0..=PI / 2.0 + ANGLE_SLACK).contains(&theta_min) || theta_min >= theta_max {
        return Err(Error::invalid(
            "cap bounds must satisfy 0 <= theta_min < theta_max",
        ));
    }
    if theta_max > PI / 2.0 + ANGLE_SLACK {
        return Err(Error::invalid("cap must not extend below the horizon"));
    }
    if target_count == 0 {
        return Err(Error::invalid("target_count must be positive"));
    }
    let k = target_count;
    let cap_area = 2.0 * PI * (theta_min.cos() - theta_max.cos());
    let dtheta = theta_max - theta_min;

    // Ring count from the equal-area step: one ring per sqrt(Ω/K) of polar extent.
    let step = (cap_area / k as f64).sqrt();
    let rings = ((dtheta / step).round() as usize).clamp(1, k);

    let ring_thetas: Vec<f64> = if rings == 1 {
        // Single ring at the cap's area centroid: ∫θ sinθ dθ / ∫ sinθ dθ.
        let num = theta_max.sin() - theta_max * theta_max.cos()
            - (theta_min.sin() - theta_min * theta_min.cos());
        let den = theta_min.cos() - theta_max.cos();
        vec![num / den]
    } else {
        (0..rings)
            .map(|i| {
                if i == rings - 1 {
                    theta_max // pin the final ring to the exact bound
                } else {
                    theta_min + dtheta * i as f64 / (rings - 1) as f64
                }
            })
            .collect()
    };

    // Band edges at ring midpoints; the outer edges are the cap bounds.
    let mut edges = Vec::with_capacity(rings + 1);
    edges.push(theta_min);
    for i in 1..rings {
        edges.push(0.5 * (ring_thetas[i - 1] + ring_thetas[i]));
    }
    edges.push(theta_max);
    let areas: Vec<f64> = (0..rings)
        .map(|i| 2.0 * PI * (edges[i].cos() - edges[i + 1].cos()))
        .collect();

    // Largest-remainder apportionment of exactly K points to the bands.
    let quotas: Vec<f64> = areas.iter().map(|a| k as f64 * a / cap_area).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..rings).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for slot in 0..k.saturating_sub(assigned) {
        counts[order[slot % rings]] += 1;
    }
    // Every ring must hold at least one point; steal from the largest ring.
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..rings)
            .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
            .expect("rings >= 1");
        debug_assert!(counts[donor] > 1);
        counts[donor] -= 1;
        counts[empty] += 1;
    }

    let mut directions = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for (i, &n) in counts.iter().enumerate() {
        let w = areas[i] / n as f64;
        for j in 0..n {
            let phi = TAU * j as f64 / n as f64;
            directions.push(Direction::new(ring_thetas[i], phi)?);
            weights.push(w);
        }
    }
    DoAGrid::from_parts(directions, weights, theta_min, theta_max)
}

/// Permutation of grid indices ordered by ascending great-circle distance to
/// the north pole, ties broken by ascending azimuth then original index.
pub fn sort_reference_order(grid: &DoAGrid) -> Vec<usize> {
    let pole = Direction::new(0.0, 0.0).expect("pole is valid");
    let keys: Vec<(f64, f64)> = grid
        .directions()
        .iter()
        .map(|d| (great_circle_distance(pole, *d), d.phi()))
        .collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| {
        keys[i]
            .0
            .partial_cmp(&keys[j].0)
            .unwrap()
            .then(keys[i].1.partial_cmp(&keys[j].1).unwrap())
            .then(i.cmp(&j))
    });
    order
}
