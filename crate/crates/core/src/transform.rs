//! The end-to-end pipeline and out-of-sample projection.
//!
//! [`fit`] builds the hierarchy, fits the preliminary linear map, translates
//! every level into place and optionally inflates point clusters. The
//! returned [`ProjectionModel`] keeps, for each centroid of one lookup level,
//! the map its children went through; a new point is projected by finding
//! its nearest lookup centroid in the input space, applying the linear map
//! and replaying that centroid's map.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid_argument, invalid_data, HnneError, Result};
use crate::hierarchy::{build_hierarchy, group_means, Hierarchy};
use crate::linproj::{
    apply_linear, fit_linear, fit_pca, random_points, select_pca_level, InitMode, LinearMap,
    PcaLevel, PcaRoute, PCA_LEVEL_THRESHOLD,
};
use crate::matrix::DataMatrix;
use crate::nnsearch::{query_exact, NnBackend};
use crate::translate::{
    inflate, translate_down, ClusterAffine, Prelim, TranslateParams, Translation,
    DEFAULT_RADIUS_FRACTION,
};

/// Options for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub dim: usize,
    pub init: InitMode,
    pub radius_fraction: f64,
    /// `None` picks 1 for `dim ≤ 3` and 3/5 otherwise (or with `guarantee`).
    pub shrink: Option<f64>,
    pub guarantee: bool,
    pub inflate: bool,
    pub backend: NnBackend,
    pub seed: u64,
    pub pca_threshold: usize,
    /// Hierarchy level used for out-of-sample lookup. `None` means level 1,
    /// or level 0 when there is only one centroid level.
    pub transform_level: Option<usize>,
}

impl FitParams {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            init: InitMode::default(),
            radius_fraction: DEFAULT_RADIUS_FRACTION,
            shrink: None,
            guarantee: false,
            inflate: false,
            backend: NnBackend::default(),
            seed: 0,
            pca_threshold: PCA_LEVEL_THRESHOLD,
            transform_level: None,
        }
    }

    pub fn translate_params(&self) -> Result<TranslateParams> {
        let mut p = TranslateParams::for_dim(self.dim, self.guarantee);
        p.radius_fraction = self.radius_fraction;
        if let Some(s) = self.shrink {
            p.shrink = s;
        }
        p.inflation = self.inflate;
        p.backend = self.backend;
        p.seed = self.seed;
        p.validate(self.guarantee)?;
        Ok(p)
    }
}

/// Everything produced by [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub embedding: DataMatrix,
    pub model: ProjectionModel,
    pub hierarchy: Hierarchy,
    pub translation: Translation,
    pub prelim: Prelim,
    pub pca_level: PcaLevel,
    /// Rows the linear map was estimated from.
    pub linear_fit_rows: usize,
}

/// Replayable state for projecting new points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    linear: LinearMap,
    lookup_level: Option<usize>,
    lookup_centroids: Option<DataMatrix>,
    affines: Vec<ClusterAffine>,
    params: TranslateParams,
}

fn stride_sample(points: &DataMatrix, cap: usize) -> DataMatrix {
    if points.rows() <= cap {
        return points.clone();
    }
    let idx: Vec<usize> = (0..cap).map(|i| i * points.rows() / cap).collect();
    points.select_rows(&idx)
}

/// Runs the full embedding pipeline on `points`.
pub fn fit(points: &DataMatrix, params: &FitParams) -> Result<FitOutput> {
    let (n, dim_in) = (points.rows(), points.cols());
    if n < 2 {
        return Err(invalid_argument(format!("need at least 2 points, got {n}")));
    }
    if params.dim == 0 || params.dim > dim_in {
        return Err(invalid_argument(format!(
            "target dimension {} must be in 1..={dim_in}",
            params.dim
        )));
    }
    let tparams = params.translate_params()?;
    let d = params.dim;
    let hierarchy = build_hierarchy(points, params.backend)?;

    // preliminary linear map
    let mut pca_level = PcaLevel::Points;
    let (linear, fit_rows) = match params.init {
        InitMode::PcaCentroids => {
            pca_level = select_pca_level(&hierarchy, params.pca_threshold);
            let source = match pca_level {
                PcaLevel::Points => points,
                PcaLevel::Centroids(l) => &hierarchy.levels()[l].centroids,
            };
            let mut sample = stride_sample(source, 2 * params.pca_threshold);
            if sample.rows() <= d {
                pca_level = PcaLevel::Points;
                sample = stride_sample(points, 2 * params.pca_threshold.max(d + 1));
            }
            (pca_or_complete(&sample, d, params.init)?, sample.rows())
        }
        InitMode::PcaFull => (pca_or_complete(points, d, params.init)?, n),
        mode => (fit_linear(points, d, mode, params.seed)?, n),
    };

    let prelim = preliminary(points, &hierarchy, &linear, params.seed)?;
    let translation = translate_down(&hierarchy, &prelim, &tparams)?;
    let mut translation = translation;
    if params.inflate && !hierarchy.levels().is_empty() {
        let (coords, affines) = inflate(
            &translation.embedding,
            hierarchy.base_partition(),
            &translation.affines[0],
        )?;
        translation.embedding = coords;
        translation.affines[0] = affines;
    }

    let n_levels = hierarchy.levels().len();
    let lookup_level = match params.transform_level {
        Some(l) if l >= n_levels => {
            return Err(invalid_argument(format!(
                "transform level {l} out of range: hierarchy has {n_levels} centroid level(s)"
            )))
        }
        Some(l) => Some(l),
        None if n_levels >= 2 => Some(1),
        None if n_levels == 1 => Some(0),
        None => None,
    };
    let model = ProjectionModel {
        linear,
        lookup_level,
        lookup_centroids: lookup_level.map(|l| hierarchy.levels()[l].centroids.clone()),
        affines: lookup_level
            .map(|l| translation.affines[l].clone())
            .unwrap_or_default(),
        params: tparams,
    };
    Ok(FitOutput {
        embedding: translation.embedding.clone(),
        model,
        hierarchy,
        translation,
        prelim,
        pca_level,
        linear_fit_rows: fit_rows,
    })
}

/// PCA that tolerates fewer samples than components by completing the basis.
fn pca_or_complete(sample: &DataMatrix, d: usize, mode: InitMode) -> Result<LinearMap> {
    if sample.rows() > d {
        fit_linear(sample, d, mode, 0)
    } else {
        fit_pca(sample, d, PcaRoute::Covariance, mode)
    }
}

fn preliminary(points: &DataMatrix, h: &Hierarchy, linear: &LinearMap, seed: u64) -> Result<Prelim> {
    if linear.mode() == InitMode::RandomPoints {
        let pts = random_points(points.rows(), linear.output_dim(), seed);
        let mut levels: Vec<DataMatrix> = Vec::with_capacity(h.levels().len());
        for (k, level) in h.levels().iter().enumerate() {
            let below = if k == 0 { &pts } else { &levels[k - 1] };
            let m = group_means(below, &level.parent_of_child);
            levels.push(m);
        }
        return Ok(Prelim {
            points: pts,
            levels,
        });
    }
    Ok(Prelim {
        points: apply_linear(linear, points)?,
        levels: h
            .levels()
            .iter()
            .map(|l| apply_linear(linear, &l.centroids))
            .collect::<Result<_>>()?,
    })
}

impl ProjectionModel {
    pub fn linear(&self) -> &LinearMap {
        &self.linear
    }

    pub fn lookup_level(&self) -> Option<usize> {
        self.lookup_level
    }

    pub fn lookup_centroids(&self) -> Option<&DataMatrix> {
        self.lookup_centroids.as_ref()
    }

    pub fn affines(&self) -> &[ClusterAffine] {
        &self.affines
    }

    pub fn params(&self) -> &TranslateParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.linear.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.linear.output_dim()
    }

    /// Projects unseen points. Each point is attached to its nearest lookup
    /// centroid in the input space and mapped like that centroid's children.
    ///
    /// With the `random` init there is no linear map to carry a point's
    /// offset within its cell, so points land on their centroid's position.
    pub fn transform(&self, new_points: &DataMatrix) -> Result<DataMatrix> {
        transform(self, new_points)
    }

    /// Index of the nearest lookup centroid for each row.
    pub fn assign(&self, new_points: &DataMatrix) -> Result<Vec<usize>> {
        let Some(centroids) = &self.lookup_centroids else {
            return Ok(vec![0; new_points.rows()]);
        };
        let nl = query_exact(centroids, new_points, 1)?;
        Ok((0..nl.len()).map(|i| nl.indices(i)[0]).collect())
    }
}

/// See [`ProjectionModel::transform`].
pub fn transform(model: &ProjectionModel, new_points: &DataMatrix) -> Result<DataMatrix> {
    if new_points.cols() != model.input_dim() {
        return Err(invalid_argument(format!(
            "new points have {} columns, the model expects {}",
            new_points.cols(),
            model.input_dim()
        )));
    }
    let d = model.output_dim();
    let prelim = apply_linear(&model.linear, new_points)?;
    if model.lookup_centroids.is_none() {
        return Ok(prelim);
    }
    let owner = model.assign(new_points)?;
    let random = model.linear.mode() == InitMode::RandomPoints;
    let mut out = DataMatrix::zeros(new_points.rows(), d);
    out.par_rows_mut()
        .zip(prelim.par_rows())
        .zip(owner.par_iter())
        .for_each(|((o, x), &c)| {
            let a = &model.affines[c];
            if random {
                o.copy_from_slice(&a.center);
            } else {
                a.apply(x, o);
            }
        });
    Ok(out)
}

// ---------------------------------------------------------------------------
// binary model format, see docs/model-format.md

const MODEL_MAGIC: &[u8; 4] = b"HNNE";
pub const MODEL_VERSION: u32 = 1;
const FLAG_INFLATION: u32 = 1;
const FLAG_LOOKUP: u32 = 2;

fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, v: &[f64]) -> io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).map_err(truncated)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn truncated(e: io::Error) -> HnneError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        invalid_data("model file is truncated")
    } else {
        HnneError::Io(e)
    }
}

impl ProjectionModel {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let dim_in = self.input_dim();
        let d = self.output_dim();
        let g = self.lookup_centroids.as_ref().map_or(0, |c| c.rows());
        let mut flags = 0;
        if self.params.inflation {
            flags |= FLAG_INFLATION;
        }
        if self.lookup_level.is_some() {
            flags |= FLAG_LOOKUP;
        }
        w.write_all(MODEL_MAGIC)?;
        put_u32(w, MODEL_VERSION)?;
        put_u32(w, dim_in as u32)?;
        put_u32(w, d as u32)?;
        put_u32(w, self.linear.mode().code())?;
        put_u32(w, flags)?;
        put_u32(w, self.lookup_level.unwrap_or(0) as u32)?;
        put_u32(w, g as u32)?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        put_f64s(w, &[self.params.radius_fraction, self.params.shrink])?;
        put_f64s(w, self.linear.mean())?;
        put_f64s(w, self.linear.basis())?;
        if let Some(c) = &self.lookup_centroids {
            put_f64s(w, c.as_slice())?;
        }
        for a in &self.affines {
            put_f64s(w, &a.center)?;
            put_f64s(w, &a.origin)?;
            put_f64s(w, &[a.scale, a.rotation_angle, a.stretch[0], a.stretch[1]])?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MODEL_MAGIC {
            return Err(invalid_data("not a model file (bad magic)"));
        }
        let version = get_u32(r)?;
        if version != MODEL_VERSION {
            return Err(invalid_data(format!(
                "unsupported model version {version}"
            )));
        }
        let dim_in = get_u32(r)? as usize;
        let d = get_u32(r)? as usize;
        let mode = InitMode::from_code(get_u32(r)?)
            .ok_or_else(|| invalid_data("unknown init mode in model file"))?;
        let flags = get_u32(r)?;
        let level = get_u32(r)? as usize;
        let g = get_u32(r)? as usize;
        let seed = get_u64(r)?;
        let rp = get_f64s(r, 2)?;
        let mean = get_f64s(r, dim_in)?;
        let basis = get_f64s(r, dim_in * d)?;
        let linear = LinearMap::new(basis, mean, d, mode)
            .map_err(|e| invalid_data(format!("model linear map: {e}")))?;
        let has_lookup = flags & FLAG_LOOKUP != 0;
        let lookup_centroids = if has_lookup {
            Some(DataMatrix::new(g, dim_in, get_f64s(r, g * dim_in)?)?)
        } else {
            None
        };
        let mut affines = Vec::with_capacity(g);
        for _ in 0..if has_lookup { g } else { 0 } {
            let center = get_f64s(r, d)?;
            let origin = get_f64s(r, d)?;
            let t = get_f64s(r, 4)?;
            if !(t[0] > 0.0 && t[0].is_finite()) {
                return Err(invalid_data("model contains a non-positive scale"));
            }
            affines.push(ClusterAffine {
                center,
                origin,
                scale: t[0],
                rotation_angle: t[1],
                stretch: [t[2], t[3]],
            });
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(invalid_data("trailing bytes after model payload"));
        }
        let params = TranslateParams {
            radius_fraction: rp[0],
            shrink: rp[1],
            inflation: flags & FLAG_INFLATION != 0,
            backend: NnBackend::default(),
            seed,
        };
        Ok(Self {
            linear,
            lookup_level: has_lookup.then_some(level),
            lookup_centroids,
            affines,
            params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}
