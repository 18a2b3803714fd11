//! Image patch experiment: predict a pixel's intensity from two neighboring
//! rectangles, use the patch mean as the user summary, and explain the
//! trained predictor.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, ImageGrid};
use crate::linalg;
use crate::mi::{self, serialize_nats, MiEntry};
use crate::model::{project_rows, ExplanationSupport, SampleSet, RNG_NAME};
use crate::regression::{PathPoint, SolverConfig, SparseFit};
use crate::subsets;
use crate::xml::{self, Method};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest MI table (in rows) the experiment writes alongside its report.
pub const MI_TABLE_ROW_LIMIT: u64 = 1 << 20;

/// Axis-aligned rectangle relative to the target pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub row_offset: i64,
    pub col_offset: i64,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    fn contains(&self, dr: i64, dc: i64) -> bool {
        dr >= self.row_offset
            && dr < self.row_offset + self.height as i64
            && dc >= self.col_offset
            && dc < self.col_offset + self.width as i64
    }

    fn offsets(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.height as i64).flat_map(move |r| {
            (0..self.width as i64).map(move |c| (self.row_offset + r, self.col_offset + c))
        })
    }
}

/// Two rectangles whose pixels form the feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodGeometry {
    pub rectangles: [Rect; 2],
}

impl Default for NeighborhoodGeometry {
    /// Two 5×5 blocks centered on the target row, three columns left and right.
    fn default() -> Self {
        Self {
            rectangles: [
                Rect {
                    row_offset: -2,
                    col_offset: -5,
                    height: 5,
                    width: 5,
                },
                Rect {
                    row_offset: -2,
                    col_offset: 1,
                    height: 5,
                    width: 5,
                },
            ],
        }
    }
}

impl NeighborhoodGeometry {
    pub fn new(first: Rect, second: Rect) -> Result<Self> {
        let g = Self {
            rectangles: [first, second],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.rectangles.iter().enumerate() {
            if r.height == 0 || r.width == 0 {
                return Err(Error::InvalidArgument(format!("rectangle {} is empty", k + 1)));
            }
            if r.contains(0, 0) {
                return Err(Error::InvalidArgument(format!(
                    "rectangle {} covers the target pixel",
                    k + 1
                )));
            }
        }
        let [a, b] = &self.rectangles;
        if a.offsets().any(|(dr, dc)| b.contains(dr, dc)) {
            return Err(Error::InvalidArgument("rectangles overlap".into()));
        }
        Ok(())
    }

    /// Feature count `n`.
    pub fn pixel_count(&self) -> usize {
        self.rectangles.iter().map(|r| r.height * r.width).sum()
    }

    /// `(row, col)` offset of every feature, raster order within rectangle 1
    /// then rectangle 2.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        self.rectangles.iter().flat_map(Rect::offsets).collect()
    }

    /// Half-width of the smallest square patch around the target that holds
    /// every feature pixel.
    pub fn radius(&self) -> usize {
        self.offsets()
            .iter()
            .map(|&(dr, dc)| dr.unsigned_abs().max(dc.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Target positions on the stride grid whose full square patch fits.
pub fn target_positions(
    image: &ImageGrid,
    geometry: &NeighborhoodGeometry,
    stride: usize,
) -> Result<Vec<(usize, usize)>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let r = geometry.radius();
    let side = 2 * r + 1;
    if image.height() < side || image.width() < side {
        return Err(Error::GeometryTooLarge(format!(
            "{}x{} patch needs a larger image than {}x{}",
            side,
            side,
            image.width(),
            image.height()
        )));
    }
    let rows = (r..image.height() - r).step_by(stride);
    Ok(rows
        .flat_map(|row| (r..image.width() - r).step_by(stride).map(move |col| (row, col)))
        .collect())
}

/// One row per target: neighborhood intensities and the target intensity,
/// both minus the global image mean.
pub fn extract_patches(
    image: &ImageGrid,
    geometry: &NeighborhoodGeometry,
    stride: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    geometry.validate()?;
    let targets = target_positions(image, geometry, stride)?;
    let offsets = geometry.offsets();
    let n = offsets.len();
    let mean = image.mean();
    let rows: Vec<(Vec<f64>, f64)> = targets
        .par_iter()
        .map(|&(r, c)| {
            let x = offsets
                .iter()
                .map(|&(dr, dc)| {
                    let rr = (r as i64 + dr) as usize;
                    let cc = (c as i64 + dc) as usize;
                    image.get(rr, cc) - mean
                })
                .collect();
            (x, image.get(r, c) - mean)
        })
        .collect();
    let m = rows.len();
    let features = DMatrix::from_fn(m, n, |i, j| rows[i].0[j]);
    let labels = DVector::from_fn(m, |i, _| rows[i].1);
    Ok((features, labels))
}

/// Ridge regression without intercept: `argmin ‖y − Xw‖² + ridge·‖w‖²`.
pub fn train_predictor(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>> {
    let (m, n) = features.shape();
    if labels.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} feature rows but {} labels",
            labels.len()
        )));
    }
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 1, got: m });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be finite and non-negative, got {ridge}"
        )));
    }
    let mut a = linalg::symmetrize(&features.tr_mul(features));
    if ridge == 0.0 {
        let eig = linalg::eigen(&a).eigenvalues;
        let max = linalg::spectral_radius(&eig);
        let min = eig.min();
        if max == 0.0 || min <= 1e-12 * max {
            return Err(Error::SingularSystem(
                "features are rank deficient; use a positive ridge".into(),
            ));
        }
    }
    for k in 0..n {
        a[(k, k)] += ridge;
    }
    let rhs = features.tr_mul(labels);
    let chol = a.cholesky().ok_or_else(|| {
        Error::SingularSystem("normal equations are not positive definite".into())
    })?;
    Ok(chol.solve(&rhs))
}

/// Row means of the features: the patch-average user summary.
pub fn compute_user_summary(
    features: &DMatrix<f64>,
    geometry: &NeighborhoodGeometry,
) -> Result<DVector<f64>> {
    let n = geometry.pixel_count();
    if features.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns for a {n}-pixel neighborhood",
            features.ncols()
        )));
    }
    Ok(project_rows(features, &vec![1.0 / n as f64; n]))
}

fn default_stride() -> usize {
    7
}

fn default_ridge() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Relative paths resolve against the config file's directory.
    pub image: PathBuf,
    #[serde(default)]
    pub geometry: NeighborhoodGeometry,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub s: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Recorded in the report; the pipeline itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(image: impl Into<PathBuf>, s: usize) -> Self {
        Self {
            image: image.into(),
            geometry: NeighborhoodGeometry::default(),
            stride: default_stride(),
            s,
            method: Method::default(),
            ridge: default_ridge(),
            seed: 0,
            solver: SolverConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn image_path(&self) -> PathBuf {
        self.base_dir.join(&self.image)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let n = self.geometry.pixel_count();
        if self.s > n {
            return Err(Error::InvalidArgument(format!(
                "sparsity s = {} exceeds the neighborhood size n = {n}",
                self.s
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridge must be finite and non-negative, got {}",
                self.ridge
            )));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PixelOffset {
    pub row: i64,
    pub col: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageSummary {
    pub width: usize,
    pub height: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorSummary {
    pub ridge: f64,
    /// Mean squared error of `ŷ` against the centered target intensity.
    pub training_mse: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub rng: &'static str,
    pub config: ExperimentConfig,
    pub image: ImageSummary,
    pub samples: usize,
    pub features: usize,
    pub predictor: PredictorSummary,
    pub method: Method,
    pub support: ExplanationSupport,
    pub support_offsets: Vec<PixelOffset>,
    /// Conditional MI at the selected support, from empirical moments.
    #[serde(serialize_with = "serialize_nats")]
    pub mi_nats: f64,
    pub cond_var: f64,
    /// No prediction variance is left once the summary is known.
    pub degenerate: bool,
    pub fit: SparseFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_path: Option<Vec<PathPoint>>,
}

/// Report plus the optional artifacts written next to it.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub mi_table: Option<Vec<MiEntry>>,
    pub mask: ImageGrid,
}

/// Footprint of the neighborhood with the selected pixels white.
pub fn support_mask(geometry: &NeighborhoodGeometry, support: &ExplanationSupport) -> ImageGrid {
    let offsets = geometry.offsets();
    let row_min = offsets.iter().map(|o| o.0).chain([0]).min().unwrap_or(0);
    let row_max = offsets.iter().map(|o| o.0).chain([0]).max().unwrap_or(0);
    let col_min = offsets.iter().map(|o| o.1).chain([0]).min().unwrap_or(0);
    let col_max = offsets.iter().map(|o| o.1).chain([0]).max().unwrap_or(0);
    let height = (row_max - row_min + 1) as usize;
    let width = (col_max - col_min + 1) as usize;
    let mut pixels = vec![0.0; width * height];
    for &j in support.indices() {
        let (dr, dc) = offsets[j];
        pixels[(dr - row_min) as usize * width + (dc - col_min) as usize] = 1.0;
    }
    ImageGrid::new(width, height, pixels).expect("mask dimensions are consistent")
}

fn table_rows(n: usize, s: usize) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u64 = 1;
    for k in 0..=s.min(n) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((n - k) as u64) / (k as u64 + 1);
    }
    total
}

/// Runs the full pipeline on an already loaded image.
pub fn run_on_image(config: &ExperimentConfig, image: &ImageGrid) -> Result<ExperimentRun> {
    config.validate()?;
    let geometry = &config.geometry;
    let (features, labels) =
        extract_patches(image, geometry, config.stride).map_err(|e| e.in_stage("extract_patches"))?;
    let weights = train_predictor(&features, &labels, config.ridge)
        .map_err(|e| e.in_stage("train_predictor"))?;
    let predictions = project_rows(&features, weights.as_slice());
    let m = features.nrows();
    let training_mse = (&labels - &predictions).norm_squared() / m as f64;
    let summaries = compute_user_summary(&features, geometry).map_err(|e| e.in_stage("summary"))?;
    let samples = SampleSet::new(features, predictions, summaries)
        .map_err(|e| e.in_stage("extract_patches"))?;

    let explanation = xml::xml_fit(&samples, config.s, config.method, &config.solver)
        .map_err(|e| e.in_stage("explain"))?;
    let support = explanation.fit.support.clone();

    let moments = samples.empirical_moments().map_err(|e| e.in_stage("mutual_information"))?;
    let mi_value = mi::conditional_mi_default(&moments, &support)
        .map_err(|e| e.in_stage("mutual_information"))?;
    let floor = mi::default_floor(&moments);
    let n = samples.n();
    let mi_table = if n <= subsets::ENUMERATION_LIMIT && table_rows(n, config.s) <= MI_TABLE_ROW_LIMIT {
        Some(mi::mi_table(&moments, config.s).map_err(|e| e.in_stage("mutual_information"))?)
    } else {
        None
    };

    let offsets = geometry.offsets();
    let support_offsets = support
        .indices()
        .iter()
        .map(|&j| PixelOffset {
            row: offsets[j].0,
            col: offsets[j].1,
        })
        .collect();
    let mask = support_mask(geometry, &support);
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        rng: RNG_NAME,
        config: config.clone(),
        image: ImageSummary {
            width: image.width(),
            height: image.height(),
            mean: image.mean(),
        },
        samples: m,
        features: n,
        predictor: PredictorSummary {
            ridge: config.ridge,
            training_mse,
            weights: weights.iter().copied().collect(),
        },
        method: explanation.method,
        support,
        support_offsets,
        mi_nats: mi_value.nats,
        cond_var: mi_value.denominator_var,
        degenerate: mi_value.numerator_var <= floor,
        fit: explanation.fit,
        lambda_path: explanation.path,
    };
    Ok(ExperimentRun {
        report,
        mi_table,
        mask,
    })
}

/// Loads the configured image and runs the pipeline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let image = io::load_grayscale_image(&config.image_path()).map_err(|e| e.in_stage("load_image"))?;
    run_on_image(config, &image)
}

/// Writes `report.json`, `mask.pgm` and, when computed, `mi_table.csv`.
pub fn write_outputs(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&run.report)
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("mask.pgm");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    io::write_pgm(&run.mask, file).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if let Some(table) = &run.mi_table {
        let path = dir.join("mi_table.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        mi::write_mi_table_csv(table, file)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn side_pixels() -> NeighborhoodGeometry {
        NeighborhoodGeometry::new(
            Rect {
                row_offset: 0,
                col_offset: -1,
                height: 1,
                width: 1,
            },
            Rect {
                row_offset: 0,
                col_offset: 1,
                height: 1,
                width: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn default_geometry() {
        let g = NeighborhoodGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.pixel_count(), 50);
        assert_eq!(g.radius(), 5);
        let offsets = g.offsets();
        assert_eq!(offsets[0], (-2, -5));
        assert_eq!(offsets[1], (-2, -4));
        assert_eq!(offsets[25], (-2, 1));
        assert_eq!(offsets[49], (2, 5));
        // rectangle centers sit three columns either side of the target
        let mean_col = |r: &[(i64, i64)]| r.iter().map(|o| o.1).sum::<i64>() as f64 / 25.0;
        assert_eq!(mean_col(&offsets[..25]), -3.0);
        assert_eq!(mean_col(&offsets[25..]), 3.0);
    }

    #[test]
    fn geometry_validation() {
        let r = |row_offset, col_offset, height, width| Rect {
            row_offset,
            col_offset,
            height,
            width,
        };
        assert!(NeighborhoodGeometry::new(r(-1, 0, 3, 1), r(0, 1, 1, 1)).is_err());
        assert!(NeighborhoodGeometry::new(r(0, -2, 0, 1), r(0, 1, 1, 1)).is_err());
        assert!(NeighborhoodGeometry::new(r(0, 1, 2, 2), r(1, 2, 1, 1)).is_err());
        assert!(NeighborhoodGeometry::new(r(-1, -1, 1, 3), r(1, -1, 1, 3)).is_ok());
    }

    #[test]
    fn constant_image_centers_to_zero() {
        let img = ImageGrid::from_fn(20, 20, |_, _| 0.5).unwrap();
        let (x, y) = extract_patches(&img, &side_pixels(), 1).unwrap();
        assert_eq!(x.nrows(), 18 * 18);
        assert!(x.iter().all(|&v| v == 0.0));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_by_three_has_one_target() {
        let img = ImageGrid::from_fn(3, 3, |r, c| (3 * r + c) as f64 / 8.0).unwrap();
        let (x, y) = extract_patches(&img, &side_pixels(), 1).unwrap();
        let mean = 0.5;
        assert_eq!(x.shape(), (1, 2));
        assert_eq!(x[(0, 0)], 3.0 / 8.0 - mean);
        assert_eq!(x[(0, 1)], 5.0 / 8.0 - mean);
        assert_eq!(y[0], 4.0 / 8.0 - mean);
        let small = ImageGrid::from_fn(2, 3, |_, _| 0.1).unwrap();
        assert!(matches!(
            extract_patches(&small, &side_pixels(), 1),
            Err(Error::GeometryTooLarge(_))
        ));
    }

    #[test]
    fn stripe_image_hand_evaluated() {
        // columns 0 and 2 white, column 1 black; mean 2/3
        let img = ImageGrid::from_fn(3, 3, |_, c| if c % 2 == 0 { 1.0 } else { 0.0 }).unwrap();
        let (x, y) = extract_patches(&img, &side_pixels(), 1).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(x[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(y[0], -2.0 / 3.0, epsilon = 1e-15);
        assert!(x[(0, 0)] * y[0] < 0.0);

        // wider stripes: every row shares the same ± pattern
        let img = ImageGrid::from_fn(9, 9, |_, c| if c % 2 == 0 { 1.0 } else { 0.0 }).unwrap();
        let (x, y) = extract_patches(&img, &side_pixels(), 1).unwrap();
        for i in 0..x.nrows() {
            assert_eq!(x[(i, 0)], x[(i, 1)]);
            assert!(x[(i, 0)] * y[i] < 0.0);
        }
    }

    #[test]
    fn stride_grid_order() {
        let img = ImageGrid::from_fn(7, 5, |_, _| 0.0).unwrap();
        let t = target_positions(&img, &side_pixels(), 2).unwrap();
        assert_eq!(t, vec![(1, 1), (1, 3), (1, 5), (3, 1), (3, 3), (3, 5)]);
        assert!(target_positions(&img, &side_pixels(), 0).is_err());
    }

    #[test]
    fn predictor_interpolates_and_shrinks() {
        let x = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let w0 = DVector::from_row_slice(&[0.5, -1.5, 2.0]);
        let y = &x * &w0;
        let w = train_predictor(&x, &y, 0.0).unwrap();
        assert!((w - &w0).amax() < 1e-8);
        let w = train_predictor(&x, &y, 1e12).unwrap();
        assert!(w.amax() < 1e-6);
    }

    #[test]
    fn predictor_matches_lu_normal_equations() {
        let x = DMatrix::from_fn(40, 4, |i, j| ((i * i + 3 * j * i + j) % 17) as f64 / 17.0 - 0.4);
        let y = DVector::from_fn(40, |i, _| ((i * 5) % 13) as f64 / 13.0);
        let ridge = 0.3;
        let a = x.transpose() * &x + DMatrix::identity(4, 4) * ridge;
        let oracle = a.lu().solve(&(x.transpose() * &y)).unwrap();
        let w = train_predictor(&x, &y, ridge).unwrap();
        assert!((w - oracle).amax() < 1e-8);
    }

    #[test]
    fn predictor_rejects_rank_deficiency() {
        let x = DMatrix::from_fn(10, 2, |i, _| i as f64);
        let y = DVector::from_element(10, 1.0);
        assert!(matches!(
            train_predictor(&x, &y, 0.0),
            Err(Error::SingularSystem(_))
        ));
        assert!(train_predictor(&x, &y, 1e-3).is_ok());
        assert!(train_predictor(&x, &y, -1.0).is_err());
    }

    #[test]
    fn user_summary_is_row_mean() {
        let g = side_pixels();
        let x = DMatrix::from_row_slice(2, 2, &[0.2, 0.4, 0.0, 0.0]);
        let u = compute_user_summary(&x, &g).unwrap();
        assert_relative_eq!(u[0], 0.3, epsilon = 1e-15);
        assert_eq!(u[1], 0.0);
        let v = DVector::from_element(2, 0.5);
        assert_eq!(u, &x * v);
        assert!(compute_user_summary(&DMatrix::zeros(2, 3), &g).is_err());
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = ImageGrid::from_fn(30, 30, |_, _| 0.25).unwrap();
        let mut cfg = ExperimentConfig::new("unused.pgm", 3);
        cfg.stride = 3;
        let run = run_on_image(&cfg, &img).unwrap();
        assert!(run.report.degenerate);
        assert!(run.report.support.is_empty());
        assert_eq!(run.report.mi_nats, 0.0);
        assert!(run.mi_table.is_none());
        assert!(run.mask.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn oversized_sparsity_is_usage_error() {
        let cfg = ExperimentConfig::new("x.pgm", 51);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.kind(), crate::error::ErrorKind::Usage);
    }

    #[test]
    fn config_toml_defaults_and_errors() {
        let cfg = ExperimentConfig::parse("image = \"a.pgm\"\ns = 2\n").unwrap();
        assert_eq!(cfg.stride, 7);
        assert_eq!(cfg.ridge, 1e-6);
        assert_eq!(cfg.method, Method::Auto);
        assert_eq!(cfg.geometry, NeighborhoodGeometry::default());
        let cfg = ExperimentConfig::parse(
            "image = \"a.pgm\"\ns = 1\nmethod = \"omp\"\n\
             [[geometry.rectangles]]\nrow_offset = 0\ncol_offset = -1\nheight = 1\nwidth = 1\n\
             [[geometry.rectangles]]\nrow_offset = 0\ncol_offset = 1\nheight = 1\nwidth = 1\n\
             [solver]\ntol = 1e-9\n",
        )
        .unwrap();
        assert_eq!(cfg.geometry, side_pixels());
        assert_eq!(cfg.method, Method::Omp);
        assert_eq!(cfg.solver.tol, 1e-9);
        match ExperimentConfig::parse("image = \"a.pgm\"\ns = \n") {
            Err(Error::Config(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ExperimentConfig::parse("image = \"a.pgm\"\ns = 1\nbogus = 3\n").is_err());
    }

    #[test]
    fn mask_marks_selected_offsets() {
        let g = side_pixels();
        let support = ExplanationSupport::new(vec![1], 1, 2).unwrap();
        let mask = support_mask(&g, &support);
        assert_eq!((mask.width(), mask.height()), (3, 1));
        assert_eq!(mask.pixels(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn table_row_count() {
        assert_eq!(table_rows(4, 2), 1 + 4 + 6);
        assert_eq!(table_rows(3, 3), 8);
        assert_eq!(table_rows(25, 25), 1 << 25);
    }
}
