//! Preliminary linear embedding.
//!
//! By default the principal axes are estimated from a single hierarchy level
//! of roughly a thousand centroids rather than from every point, which makes
//! the fit independent of `N`. The other modes exist for comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid_argument, HnneError, Result};
use crate::hierarchy::Hierarchy;
use crate::matrix::DataMatrix;
use crate::rng;

/// Default cardinality threshold for picking the PCA level.
pub const PCA_LEVEL_THRESHOLD: usize = 1000;

/// How the preliminary coordinates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// PCA estimated on hierarchy centroids.
    #[default]
    PcaCentroids,
    /// PCA estimated on every point.
    PcaFull,
    /// `d` random unit directions.
    RandomProjection,
    /// No projection: uniform random coordinates in `[0, 1]^d`.
    RandomPoints,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::PcaCentroids => "pca-centroids",
            InitMode::PcaFull => "pca-full",
            InitMode::RandomProjection => "random-proj",
            InitMode::RandomPoints => "random",
        }
    }

    pub fn is_pca(self) -> bool {
        matches!(self, InitMode::PcaCentroids | InitMode::PcaFull)
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            InitMode::PcaCentroids => 0,
            InitMode::PcaFull => 1,
            InitMode::RandomProjection => 2,
            InitMode::RandomPoints => 3,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => InitMode::PcaCentroids,
            1 => InitMode::PcaFull,
            2 => InitMode::RandomProjection,
            3 => InitMode::RandomPoints,
            _ => return None,
        })
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitMode {
    type Err = HnneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca-centroids" => Ok(InitMode::PcaCentroids),
            "pca-full" => Ok(InitMode::PcaFull),
            "random-proj" => Ok(InitMode::RandomProjection),
            "random" => Ok(InitMode::RandomPoints),
            other => Err(invalid_argument(format!("unknown init mode '{other}'"))),
        }
    }
}

/// `x ↦ (x − mean) · basis`, with `basis` stored row-major as `D × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    basis: Vec<f64>,
    mean: Vec<f64>,
    output_dim: usize,
    mode: InitMode,
}

impl LinearMap {
    pub fn new(basis: Vec<f64>, mean: Vec<f64>, output_dim: usize, mode: InitMode) -> Result<Self> {
        if output_dim == 0 || mean.is_empty() || basis.len() != mean.len() * output_dim {
            return Err(invalid_argument(format!(
                "basis of {} values does not fit {}x{output_dim}",
                basis.len(),
                mean.len()
            )));
        }
        if basis.iter().chain(&mean).any(|v| !v.is_finite()) {
            return Err(invalid_argument("linear map contains non-finite values"));
        }
        Ok(Self {
            basis,
            mean,
            output_dim,
            mode,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mode(&self) -> InitMode {
        self.mode
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `D × d` basis.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Column `j` of the basis.
    pub fn axis(&self, j: usize) -> Vec<f64> {
        (0..self.input_dim())
            .map(|r| self.basis[r * self.output_dim + j])
            .collect()
    }

    pub(crate) fn project_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.output_dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, (&v, &m)) in x.iter().zip(&self.mean).enumerate() {
            let c = v - m;
            let row = &self.basis[r * d..(r + 1) * d];
            for (o, &b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
    }
}

/// Which point set the PCA basis is estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaLevel {
    /// Use the data points themselves.
    Points,
    /// Use the centroids of the given hierarchy level.
    Centroids(usize),
}

/// Lowest level such that every level above it has fewer than `threshold`
/// centroids. The data points count as the level below level 0, so when all
/// centroid levels are small the points are used directly.
pub fn select_pca_level(h: &Hierarchy, threshold: usize) -> PcaLevel {
    select_level_from_sizes(&h.level_sizes(), threshold)
}

/// [`select_pca_level`] on bare centroid-level sizes, bottom level first.
pub fn select_level_from_sizes(level_sizes: &[usize], threshold: usize) -> PcaLevel {
    match level_sizes.iter().rposition(|&s| s >= threshold) {
        Some(l) => PcaLevel::Centroids(l),
        None => PcaLevel::Points,
    }
}

/// Eigen-solver route for PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaRoute {
    /// Pick the cheaper of the two.
    Auto,
    /// Eigendecomposition of the `D × D` covariance.
    Covariance,
    /// Eigendecomposition of the `n × n` inner-product matrix.
    Gram,
}

/// Fits a linear map to `points`. PCA modes require `d ≤ min(n − 1, D)`;
/// the random modes require `d ≤ D`.
pub fn fit_linear(points: &DataMatrix, d: usize, mode: InitMode, seed: u64) -> Result<LinearMap> {
    let (n, dim) = (points.rows(), points.cols());
    if d == 0 || d > dim {
        return Err(invalid_argument(format!(
            "target dimension {d} must be in 1..={dim}"
        )));
    }
    match mode {
        InitMode::PcaCentroids | InitMode::PcaFull => {
            if d > n.saturating_sub(1) {
                return Err(invalid_argument(format!(
                    "PCA to {d} dimensions needs more than {d} samples, got {n}"
                )));
            }
            fit_pca(points, d, PcaRoute::Auto, mode)
        }
        InitMode::RandomProjection => {
            let mut rng = rng::seeded(seed, 0x5250);
            let mut basis = vec![0.0; dim * d];
            for j in 0..d {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for (r, x) in v.iter().enumerate() {
                    basis[r * d + j] = x / norm;
                }
            }
            LinearMap::new(basis, points.mean(), d, mode)
        }
        InitMode::RandomPoints => {
            let mut basis = vec![0.0; dim * d];
            for j in 0..d {
                basis[j * d + j] = 1.0;
            }
            LinearMap::new(basis, vec![0.0; dim], d, mode)
        }
    }
}

/// Principal axes of `points` through an explicit route. Yields `d`
/// orthonormal columns; if fewer than `d` directions carry variance the
/// remainder is completed with coordinate axes.
pub fn fit_pca(points: &DataMatrix, d: usize, route: PcaRoute, mode: InitMode) -> Result<LinearMap> {
    let (n, dim) = (points.rows(), points.cols());
    if d == 0 || d > dim {
        return Err(invalid_argument(format!(
            "target dimension {d} must be in 1..={dim}"
        )));
    }
    let mean = points.mean();
    let centered = DMatrix::from_fn(n, dim, |i, j| points.row(i)[j] - mean[j]);
    let total_var: f64 = centered.iter().map(|v| v * v).sum();
    let route = match route {
        PcaRoute::Auto if n < dim => PcaRoute::Gram,
        PcaRoute::Auto => PcaRoute::Covariance,
        r => r,
    };

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    if total_var > 0.0 {
        match route {
            PcaRoute::Covariance => {
                let cov = centered.transpose() * &centered;
                for (_, v) in top_eigenpairs(cov, d) {
                    axes.push(v);
                }
            }
            _ => {
                let gram = &centered * centered.transpose();
                let pairs = top_eigenpairs(gram, d.min(n));
                let floor = pairs.first().map_or(0.0, |p| p.0) * 1e-12;
                for (lambda, u) in pairs {
                    if lambda <= floor {
                        break;
                    }
                    let u = nalgebra::DVector::from_vec(u);
                    let v = centered.transpose() * u;
                    axes.push(v.iter().copied().collect());
                }
            }
        }
    } else {
        log::warn!("PCA input has zero variance; falling back to coordinate axes");
    }
    let axes = orthonormal_completion(axes, d, dim);

    let mut basis = vec![0.0; dim * d];
    for (j, a) in axes.iter().enumerate() {
        for (r, &x) in a.iter().enumerate() {
            basis[r * d + j] = x;
        }
    }
    LinearMap::new(basis, mean, d, mode)
}

/// Eigenpairs with the largest eigenvalues, descending.
fn top_eigenpairs(m: DMatrix<f64>, count: usize) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(count)
        .map(|i| {
            (
                eig.eigenvalues[i],
                eig.eigenvectors.column(i).iter().copied().collect(),
            )
        })
        .collect()
}

/// Gram-Schmidt over `axes`, dropping degenerate directions and filling up to
/// `d` columns with coordinate axes. The largest-magnitude entry of every
/// column is made positive.
fn orthonormal_completion(axes: Vec<Vec<f64>>, d: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(d);
    let candidates = axes.into_iter().chain((0..dim).map(|a| {
        let mut e = vec![0.0; dim];
        e[a] = 1.0;
        e
    }));
    for mut v in candidates {
        if out.len() == d {
            break;
        }
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            continue;
        }
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for u in &out {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        out.push(v);
    }
    out
}

/// Projects every row through `map`.
pub fn apply_linear(map: &LinearMap, points: &DataMatrix) -> Result<DataMatrix> {
    if points.cols() != map.input_dim() {
        return Err(invalid_argument(format!(
            "points have {} columns but the map expects {}",
            points.cols(),
            map.input_dim()
        )));
    }
    let d = map.output_dim();
    let mut out = DataMatrix::zeros(points.rows(), d);
    out.par_rows_mut()
        .zip(points.par_rows())
        .for_each(|(o, x)| map.project_into(x, o));
    Ok(out)
}

/// Uniform random coordinates in `[0, 1]^d`, used by [`InitMode::RandomPoints`].
pub fn random_points(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut rng = rng::seeded(seed, 0x524e);
    let v: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    DataMatrix::from_vec_unchecked(n, d, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut r = rng::seeded(seed, 99);
        let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
        DataMatrix::new(n, d, v).unwrap()
    }

    fn gram_check(map: &LinearMap) -> f64 {
        let d = map.output_dim();
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = map.axis(a).iter().zip(map.axis(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    #[test]
    fn level_selection_follows_the_rule() {
        // sizes of levels 0..=5 over 70000 points
        let sizes = [21000, 6400, 2000, 620, 195, 60];
        assert_eq!(select_level_from_sizes(&sizes, 1000), PcaLevel::Centroids(2));
        assert_eq!(select_level_from_sizes(&[300, 90, 20], 1000), PcaLevel::Points);
        assert_eq!(select_level_from_sizes(&[1500], 1000), PcaLevel::Centroids(0));
        assert_eq!(select_level_from_sizes(&[], 1000), PcaLevel::Points);
    }

    #[test]
    fn collinear_points_recover_the_segment_direction() {
        let dir: Vec<f64> = (0..10).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let offset: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|t| {
                let t = t as f64 / 24.0 * 3.0 - 1.0;
                offset.iter().zip(&dir).map(|(o, v)| o + t * v).collect()
            })
            .collect();
        let p = DataMatrix::from_rows(&rows).unwrap();
        let map = fit_linear(&p, 1, InitMode::PcaFull, 0).unwrap();
        let cos: f64 = map.axis(0).iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() / norm;
        assert!(cos.abs() >= 1.0 - 1e-6, "cos {cos}");
    }

    #[test]
    fn full_rank_pca_reconstructs_points() {
        let p = gaussian(60, 5, 3);
        let map = fit_linear(&p, 5, InitMode::PcaFull, 0).unwrap();
        assert!(gram_check(&map) < 1e-8);
        let y = apply_linear(&map, &p).unwrap();
        for i in 0..p.rows() {
            for r in 0..5 {
                let back: f64 = map.mean()[r]
                    + (0..5).map(|j| map.basis()[r * 5 + j] * y.row(i)[j]).sum::<f64>();
                assert!((back - p.row(i)[r]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn covariance_and_gram_routes_agree() {
        let p = gaussian(200, 300, 5);
        let a = fit_pca(&p, 4, PcaRoute::Covariance, InitMode::PcaFull).unwrap();
        let b = fit_pca(&p, 4, PcaRoute::Gram, InitMode::PcaFull).unwrap();
        assert!(gram_check(&a) < 1e-8 && gram_check(&b) < 1e-8);
        let ya = apply_linear(&a, &p).unwrap();
        let yb = apply_linear(&b, &p).unwrap();
        for j in 0..4 {
            let sign = if (0..p.rows()).map(|i| ya.row(i)[j] * yb.row(i)[j]).sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            for i in 0..p.rows() {
                assert!((ya.row(i)[j] - sign * yb.row(i)[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn random_projection_is_seeded() {
        let p = gaussian(50, 12, 1);
        let a = fit_linear(&p, 3, InitMode::RandomProjection, 42).unwrap();
        let b = fit_linear(&p, 3, InitMode::RandomProjection, 42).unwrap();
        let c = fit_linear(&p, 3, InitMode::RandomProjection, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.basis(), c.basis());
        for j in 0..3 {
            let n: f64 = a.axis(j).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_falls_back_to_axes() {
        let p = DataMatrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]).unwrap();
        let map = fit_linear(&p, 2, InitMode::PcaFull, 0).unwrap();
        assert_eq!(map.axis(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(map.axis(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn too_many_components_is_rejected() {
        let p = gaussian(3, 10, 0);
        assert!(fit_linear(&p, 3, InitMode::PcaFull, 0).is_err());
        assert!(fit_linear(&p, 11, InitMode::RandomProjection, 0).is_err());
        assert!(fit_linear(&p, 2, InitMode::PcaFull, 0).is_ok());
    }

    #[test]
    fn identity_map_and_column_mismatch() {
        let p = gaussian(5, 3, 0);
        let id = LinearMap::new(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            3,
            InitMode::PcaFull,
        )
        .unwrap();
        assert_eq!(apply_linear(&id, &p).unwrap(), p);
        let q = gaussian(5, 4, 0);
        assert!(apply_linear(&id, &q).is_err());
    }

    #[test]
    fn projection_commutes_with_averaging() {
        let p = gaussian(40, 6, 8);
        let map = fit_linear(&p, 2, InitMode::PcaFull, 0).unwrap();
        let y = apply_linear(&map, &p).unwrap();
        let mean_then_project = apply_linear(&map, &DataMatrix::from_rows(&[p.mean()]).unwrap()).unwrap();
        let project_then_mean = y.mean();
        for (a, b) in mean_then_project.row(0).iter().zip(&project_then_mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
