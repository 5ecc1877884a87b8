//! Hierarchical point translation.
//!
//! Starting from the preliminary coordinates of the top level, every level is
//! placed around its already placed parents: each sibling group is re-centred
//! on its parent and uniformly scaled so its farthest member sits at
//! `shrink × radius_fraction × r`, where `r` is the parent's nearest-neighbor
//! distance among the placed parents. With `radius_fraction = 1/3` and
//! `shrink ≤ 3/5`, all descendants of a node stay inside the ball of radius
//! `radius_fraction × r` around it.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid_argument, Result};
use crate::hierarchy::{Hierarchy, Partition};
use crate::matrix::{dist, DataMatrix};
use crate::nnsearch::{knn, NnBackend};

pub const DEFAULT_RADIUS_FRACTION: f64 = 1.0 / 3.0;

/// Largest shrink factor for which descendants provably stay in their
/// ancestors' balls when `radius_fraction = 1/3`.
pub const GUARANTEE_SHRINK: f64 = 3.0 / 5.0;

/// Target spread ratio for cluster inflation.
pub const INFLATION_TARGET_RATIO: f64 = 2.0;

/// Number of candidate angles for inflation, evenly spaced over `[0, π/2]`.
pub const INFLATION_ANGLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslateParams {
    pub radius_fraction: f64,
    pub shrink: f64,
    pub inflation: bool,
    pub backend: NnBackend,
    pub seed: u64,
}

impl TranslateParams {
    /// Defaults for target dimension `d`: full-size balls in up to three
    /// dimensions, the provable shrink factor above that or when
    /// `guarantee` is requested.
    pub fn for_dim(d: usize, guarantee: bool) -> Self {
        let shrink = if guarantee || d > 3 {
            GUARANTEE_SHRINK
        } else {
            1.0
        };
        Self {
            radius_fraction: DEFAULT_RADIUS_FRACTION,
            shrink,
            inflation: false,
            backend: NnBackend::default(),
            seed: 0,
        }
    }

    pub fn validate(&self, guarantee: bool) -> Result<()> {
        if !(self.radius_fraction > 0.0 && self.radius_fraction < 1.0) {
            return Err(invalid_argument(format!(
                "radius fraction {} must lie in (0, 1)",
                self.radius_fraction
            )));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(invalid_argument(format!(
                "shrink {} must lie in (0, 1]",
                self.shrink
            )));
        }
        if guarantee {
            // children at s·f·r, grandchildren at most s·f·(2·s·f·r), ...
            let bound = 1.0 / (1.0 + 2.0 * self.radius_fraction);
            if self.shrink > bound + 1e-15 {
                return Err(invalid_argument(format!(
                    "shrink {} exceeds {bound} required for containment",
                    self.shrink
                )));
            }
        }
        Ok(())
    }
}

/// Similarity map (optionally followed by an axis stretch in a rotated frame)
/// that a group of siblings went through:
///
/// `y = center + Rᵀ(θ) · diag(stretch) · R(θ) · scale · (x − origin)`
///
/// `origin` is the mean of the siblings' preliminary coordinates and `center`
/// the parent's placed position.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAffine {
    pub center: Vec<f64>,
    pub origin: Vec<f64>,
    pub scale: f64,
    pub rotation_angle: f64,
    pub stretch: [f64; 2],
}

impl ClusterAffine {
    fn similarity(center: &[f64], origin: Vec<f64>, scale: f64) -> Self {
        Self {
            center: center.to_vec(),
            origin,
            scale,
            rotation_angle: 0.0,
            stretch: [1.0, 1.0],
        }
    }

    pub fn is_similarity(&self) -> bool {
        self.stretch == [1.0, 1.0]
    }

    /// Translation part of the similarity map: `center − scale · origin`.
    pub fn translation(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.origin)
            .map(|(c, o)| c - self.scale * o)
            .collect()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&self.origin) {
            *o = self.scale * (xi - m);
        }
        if !self.is_similarity() {
            stretch_in_frame(out, self.rotation_angle, self.stretch);
        }
        for (o, &c) in out.iter_mut().zip(&self.center) {
            *o += c;
        }
    }
}

fn rotate(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn stretch_in_frame(z: &mut [f64], theta: f64, stretch: [f64; 2]) {
    let w = rotate([z[0], z[1]], theta);
    let back = rotate([w[0] * stretch[0], w[1] * stretch[1]], -theta);
    z[0] = back[0];
    z[1] = back[1];
}

/// Distance of every row to its nearest other row.
pub fn nn_radii(level_points: &DataMatrix, backend: NnBackend) -> Result<Vec<f64>> {
    if level_points.rows() < 2 {
        return Err(invalid_argument(
            "nearest-neighbor radii need at least 2 points",
        ));
    }
    let nl = knn(level_points, 1, backend)?;
    Ok((0..nl.len()).map(|i| nl.distances(i)[0]).collect())
}

/// Replaces zero radii (coincident placements) so groups never collapse:
/// zeros become 1e-3 × the smallest positive radius, or 1 if all are zero.
pub fn effective_radii(raw: &[f64]) -> Vec<f64> {
    let min_pos = raw
        .iter()
        .copied()
        .filter(|&r| r > 0.0)
        .min_by(f64::total_cmp);
    let fill = min_pos.map_or(1.0, |m| m * 1e-3);
    raw.iter().map(|&r| if r > 0.0 { r } else { fill }).collect()
}

/// Places each sibling group around its parent. Returns the child positions
/// and, per parent, the map that was applied.
pub fn place_children(
    parent_pos: &DataMatrix,
    parent_radii: &[f64],
    assignment: &Partition,
    child_prelim: &DataMatrix,
    params: &TranslateParams,
) -> Result<(DataMatrix, Vec<ClusterAffine>)> {
    if assignment.len() != child_prelim.rows()
        || assignment.groups() != parent_pos.rows()
        || parent_radii.len() != parent_pos.rows()
        || parent_pos.cols() != child_prelim.cols()
    {
        return Err(invalid_argument(format!(
            "inconsistent placement inputs: {} parents, {} radii, {} groups, {} children",
            parent_pos.rows(),
            parent_radii.len(),
            assignment.groups(),
            child_prelim.rows()
        )));
    }
    if parent_radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(invalid_argument("radii must be finite and non-negative"));
    }
    let members = assignment.members();
    let d = child_prelim.cols();
    let ball = params.shrink * params.radius_fraction;

    let affines: Vec<ClusterAffine> = members
        .par_iter()
        .enumerate()
        .map(|(p, kids)| {
            let mut origin = vec![0.0; d];
            for &c in kids {
                origin
                    .iter_mut()
                    .zip(child_prelim.row(c))
                    .for_each(|(o, v)| *o += v);
            }
            let inv = 1.0 / kids.len() as f64;
            origin.iter_mut().for_each(|o| *o *= inv);
            let max_norm = kids
                .iter()
                .map(|&c| dist(child_prelim.row(c), &origin))
                .fold(0.0, f64::max);
            let scale = if kids.len() < 2 || max_norm == 0.0 {
                1.0
            } else {
                ball * parent_radii[p] / max_norm
            };
            ClusterAffine::similarity(parent_pos.row(p), origin, scale)
        })
        .collect();

    let mut out = DataMatrix::zeros(child_prelim.rows(), d);
    out.par_rows_mut()
        .zip(child_prelim.par_rows())
        .zip(assignment.labels().par_iter())
        .for_each(|((o, x), &p)| {
            let a = &affines[p];
            if members[p].len() < 2 {
                o.copy_from_slice(&a.center);
            } else {
                a.apply(x, o);
            }
        });
    Ok((out, affines))
}

/// Preliminary coordinates of the points and of every centroid level.
#[derive(Debug, Clone)]
pub struct Prelim {
    pub points: DataMatrix,
    pub levels: Vec<DataMatrix>,
}

/// Result of the top-down placement.
#[derive(Debug, Clone)]
pub struct Translation {
    /// Final coordinates of the points.
    pub embedding: DataMatrix,
    /// Placed coordinates of every centroid level, bottom first.
    pub positions: Vec<DataMatrix>,
    /// Radii (after the zero fallback) used to place each level's children.
    pub radii: Vec<Vec<f64>>,
    /// `affines[k][i]`: map applied to the children of node `i` on level `k`.
    pub affines: Vec<Vec<ClusterAffine>>,
}

/// Walks the hierarchy from the top level down to the points.
pub fn translate_down(h: &Hierarchy, prelim: &Prelim, params: &TranslateParams) -> Result<Translation> {
    let levels = h.levels();
    if prelim.levels.len() != levels.len() || prelim.points.rows() != h.n_points() {
        return Err(invalid_argument(
            "preliminary coordinates do not match the hierarchy",
        ));
    }
    let n_levels = levels.len();
    if n_levels == 0 {
        return Ok(Translation {
            embedding: prelim.points.clone(),
            positions: Vec::new(),
            radii: Vec::new(),
            affines: Vec::new(),
        });
    }
    let mut positions: Vec<Option<DataMatrix>> = vec![None; n_levels];
    let mut radii = vec![Vec::new(); n_levels];
    let mut affines = vec![Vec::new(); n_levels];
    positions[n_levels - 1] = Some(prelim.levels[n_levels - 1].clone());

    let mut embedding = None;
    for k in (0..n_levels).rev() {
        let parent = positions[k].as_ref().expect("placed above");
        let r = effective_radii(&nn_radii(parent, params.backend)?);
        let children = if k == 0 {
            &prelim.points
        } else {
            &prelim.levels[k - 1]
        };
        let (placed, maps) = place_children(parent, &r, &levels[k].parent_of_child, children, params)?;
        radii[k] = r;
        affines[k] = maps;
        if k == 0 {
            embedding = Some(placed);
        } else {
            positions[k - 1] = Some(placed);
        }
    }
    Ok(Translation {
        embedding: embedding.expect("level 0 placed"),
        positions: positions.into_iter().map(|p| p.expect("placed")).collect(),
        radii,
        affines,
    })
}

/// Widens flattened 2-D point clusters.
///
/// For every cluster of at least three points the spread along both axes is
/// measured after rotating by each of six angles in `[0, π/2]`; in the frame
/// with the most lopsided spread the minor axis is stretched until the ratio
/// is at most [`INFLATION_TARGET_RATIO`], the rotation is undone, and the
/// cluster is rescaled to its original maximal extent around its parent.
/// Non-2-D input is returned unchanged.
pub fn inflate(
    coords: &DataMatrix,
    partition: &Partition,
    affines: &[ClusterAffine],
) -> Result<(DataMatrix, Vec<ClusterAffine>)> {
    if coords.cols() != 2 {
        log::warn!(
            "cluster inflation only applies to 2-D embeddings; skipping for d = {}",
            coords.cols()
        );
        return Ok((coords.clone(), affines.to_vec()));
    }
    if partition.len() != coords.rows() || partition.groups() != affines.len() {
        return Err(invalid_argument(
            "inflation partition does not match coordinates or affines",
        ));
    }
    let members = partition.members();
    let updates: Vec<Option<(f64, [f64; 2])>> = members
        .par_iter()
        .zip(affines.par_iter())
        .map(|(kids, a)| inflation_for(coords, kids, &a.center))
        .collect();

    let mut out = coords.clone();
    let mut new_affines = affines.to_vec();
    for ((kids, a), upd) in members.iter().zip(new_affines.iter_mut()).zip(updates) {
        let Some((theta, stretch)) = upd else {
            continue;
        };
        a.rotation_angle = theta;
        a.stretch = stretch;
        for &i in kids {
            let row = out.row_mut(i);
            let mut z = [row[0] - a.center[0], row[1] - a.center[1]];
            stretch_in_frame(&mut z, theta, stretch);
            row[0] = a.center[0] + z[0];
            row[1] = a.center[1] + z[1];
        }
    }
    Ok((out, new_affines))
}

fn inflation_for(coords: &DataMatrix, kids: &[usize], center: &[f64]) -> Option<(f64, [f64; 2])> {
    if kids.len() < 3 {
        return None;
    }
    let rel: Vec<[f64; 2]> = kids
        .iter()
        .map(|&i| {
            let r = coords.row(i);
            [r[0] - center[0], r[1] - center[1]]
        })
        .collect();
    let orig_max = rel.iter().map(|z| z[0].hypot(z[1])).fold(0.0, f64::max);
    if orig_max == 0.0 {
        return None;
    }

    let mut best: Option<(f64, f64, usize)> = None; // (ratio, theta, minor axis)
    for j in 0..INFLATION_ANGLES {
        let theta = j as f64 * PI / (2.0 * (INFLATION_ANGLES - 1) as f64);
        let rotated: Vec<[f64; 2]> = rel.iter().map(|&z| rotate(z, theta)).collect();
        let sd = axis_std(&rotated);
        let (minor, lo, hi) = if sd[0] <= sd[1] {
            (0, sd[0], sd[1])
        } else {
            (1, sd[1], sd[0])
        };
        let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if best.is_none_or(|b| ratio > b.0) {
            best = Some((ratio, theta, minor));
        }
    }
    let (ratio, theta, minor) = best?;
    if !ratio.is_finite() || ratio <= INFLATION_TARGET_RATIO {
        return None;
    }
    let mut stretch = [1.0, 1.0];
    stretch[minor] = ratio / INFLATION_TARGET_RATIO;
    let new_max = rel
        .iter()
        .map(|&z| {
            let mut v = z;
            stretch_in_frame(&mut v, theta, stretch);
            v[0].hypot(v[1])
        })
        .fold(0.0, f64::max);
    let u = orig_max / new_max;
    Some((theta, [stretch[0] * u, stretch[1] * u]))
}

fn axis_std(v: &[[f64; 2]]) -> [f64; 2] {
    let n = v.len() as f64;
    let mut mean = [0.0; 2];
    for z in v {
        mean[0] += z[0];
        mean[1] += z[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut var = [0.0; 2];
    for z in v {
        var[0] += (z[0] - mean[0]).powi(2);
        var[1] += (z[1] - mean[1]).powi(2);
    }
    [(var[0] / n).sqrt(), (var[1] / n).sqrt()]
}
