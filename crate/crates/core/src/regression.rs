//! Empirical sparse regression of the prediction on the user summary and a
//! few features: `ŷ ≈ α·u + βᵀx` with `‖β‖₀ ≤ s` (exhaustive or OMP) or an
//! L1 penalty on `β` (Lasso). `α` is always fitted jointly and never penalized
//! unless `SolverConfig::fixed_alpha` pins it.
//!
//! Every solver works on the Gram matrix of the design `[u, x₁, …, xₙ]`, so
//! the per-support cost does not depend on the sample count. Reported
//! residual sums of squares are recomputed from the samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PINV_RELATIVE_CUTOFF};
use crate::model::{ExplanationSupport, SampleSet};
use crate::subsets;

/// Relative tie tolerance (times `‖ŷ‖²`) when comparing residual sums of squares.
pub const RSS_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Coordinate-descent stops when no coefficient moves more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub path_points: usize,
    /// λ_min / λ_max for the Lasso path grid.
    pub path_ratio: f64,
    /// Scale feature columns to unit root-mean-square before fitting.
    pub standardize: bool,
    /// Pin `α` instead of fitting it.
    pub fixed_alpha: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 100_000,
            path_points: 100,
            path_ratio: 1e-4,
            standardize: false,
            fixed_alpha: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be positive".into()));
        }
        if self.path_points < 2 {
            return Err(Error::InvalidArgument("path_points must be at least 2".into()));
        }
        if !(self.path_ratio > 0.0 && self.path_ratio < 1.0) {
            return Err(Error::InvalidArgument("path_ratio must lie in (0, 1)".into()));
        }
        if let Some(a) = self.fixed_alpha {
            if !a.is_finite() {
                return Err(Error::InvalidArgument("fixed_alpha must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FitMethod {
    LeastSquares,
    L0Exhaustive,
    Omp,
    Lasso { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L0Strategy {
    Exhaustive,
    Omp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    pub alpha: f64,
    pub beta: DVector<f64>,
    /// Indices with nonzero `beta`.
    pub support: ExplanationSupport,
    pub rss: f64,
    pub method: FitMethod,
    pub converged: bool,
}

impl SparseFit {
    /// Turns a non-converged Lasso fit into [`Error::MaxIterationsExceeded`].
    pub fn ensure_converged(self, max_sweeps: usize) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterationsExceeded { sweeps: max_sweeps })
        }
    }
}

#[derive(Serialize)]
struct Coefficient {
    index: usize,
    value: f64,
}

#[derive(Serialize)]
struct SparseFitJson<'a> {
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    support: &'a ExplanationSupport,
    alpha: f64,
    beta: Vec<Coefficient>,
    rss: f64,
    converged: bool,
}

impl Serialize for SparseFit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (method, lambda) = match self.method {
            FitMethod::LeastSquares => ("least_squares", None),
            FitMethod::L0Exhaustive => ("l0_exhaustive", None),
            FitMethod::Omp => ("omp", None),
            FitMethod::Lasso { lambda } => ("lasso", Some(lambda)),
        };
        SparseFitJson {
            method,
            lambda,
            support: &self.support,
            alpha: self.alpha,
            beta: self
                .support
                .indices()
                .iter()
                .map(|&i| Coefficient {
                    index: i + 1,
                    value: self.beta[i],
                })
                .collect(),
            rss: self.rss,
            converged: self.converged,
        }
        .serialize(s)
    }
}

/// Σᵢ (ŷ⁽ⁱ⁾ − α·u⁽ⁱ⁾ − βᵀx⁽ⁱ⁾)² evaluated directly on the samples.
pub fn residual_sum_of_squares(samples: &SampleSet, alpha: f64, beta: &DVector<f64>) -> f64 {
    let fitted = samples.features() * beta;
    let mut rss = 0.0;
    for i in 0..samples.m() {
        let r = samples.predictions()[i] - alpha * samples.summaries()[i] - fitted[i];
        rss += r * r;
    }
    rss
}

/// Sufficient statistics of the design `[u, x₁·c₁, …, xₙ·cₙ]` against the target
/// `ŷ − α₀u` (when α is pinned) or `ŷ`.
struct Gram {
    n: usize,
    /// (n+1)×(n+1); index 0 is `u`.
    g: DMatrix<f64>,
    b: DVector<f64>,
    yy: f64,
    /// Column multipliers for features (1 unless standardizing).
    scale: Vec<f64>,
    fixed_alpha: Option<f64>,
}

impl Gram {
    fn new(samples: &SampleSet, config: &SolverConfig) -> Self {
        let (m, n) = (samples.m(), samples.n());
        let mut z = DMatrix::zeros(m, n + 1);
        z.column_mut(0).copy_from(samples.summaries());
        z.view_mut((0, 1), (m, n)).copy_from(samples.features());
        let mut scale = vec![1.0; n];
        if config.standardize {
            for (j, c) in scale.iter_mut().enumerate() {
                let rms = (z.column(j + 1).norm_squared() / m as f64).sqrt();
                if rms > 0.0 {
                    *c = 1.0 / rms;
                    z.column_mut(j + 1).scale_mut(*c);
                }
            }
        }
        let target = match config.fixed_alpha {
            Some(a) => samples.predictions() - samples.summaries() * a,
            None => samples.predictions().clone(),
        };
        let g = linalg::symmetrize(&z.tr_mul(&z));
        let b = z.tr_mul(&target);
        Self {
            n,
            g,
            b,
            yy: target.norm_squared(),
            scale,
            fixed_alpha: config.fixed_alpha,
        }
    }

    fn fits_alpha(&self) -> bool {
        self.fixed_alpha.is_none()
    }

    /// Design column indices for a feature support (0-based features).
    fn columns(&self, features: &[usize]) -> Vec<usize> {
        let mut cols = Vec::with_capacity(features.len() + 1);
        if self.fits_alpha() {
            cols.push(0);
        }
        cols.extend(features.iter().map(|j| j + 1));
        cols
    }

    /// Least-squares coefficients on `cols` (pseudoinverse when singular).
    fn solve(&self, cols: &[usize]) -> DVector<f64> {
        let g = linalg::submatrix(&self.g, cols);
        let b = DVector::from_iterator(cols.len(), cols.iter().map(|&k| self.b[k]));
        linalg::solve_psd(&g, &b, PINV_RELATIVE_CUTOFF)
    }

    /// Training objective from the Gram matrix: yy − 2θᵀb + θᵀGθ.
    fn rss_of(&self, cols: &[usize], theta: &DVector<f64>) -> f64 {
        let mut lin = 0.0;
        let mut quad = 0.0;
        for (a, &ka) in cols.iter().enumerate() {
            lin += theta[a] * self.b[ka];
            for (c, &kc) in cols.iter().enumerate() {
                quad += theta[a] * self.g[(ka, kc)] * theta[c];
            }
        }
        (self.yy - 2.0 * lin + quad).max(0.0)
    }

    fn support_rss(&self, features: &[usize]) -> f64 {
        let cols = self.columns(features);
        let theta = self.solve(&cols);
        self.rss_of(&cols, &theta)
    }

    /// Maps full-length scaled coefficients θ (index 0 = α) back to (α, β).
    fn unscale(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let alpha = self.fixed_alpha.unwrap_or(theta[0]);
        let beta = DVector::from_fn(self.n, |j, _| theta[j + 1] * self.scale[j]);
        (alpha, beta)
    }
}

fn check_overdetermined(samples: &SampleSet, k: usize, fits_alpha: bool) -> Result<()> {
    let params = k + usize::from(fits_alpha);
    if samples.m() <= params {
        return Err(Error::TooFewSamples {
            needed: params,
            got: samples.m(),
        });
    }
    Ok(())
}

fn check_sparsity(samples: &SampleSet, s: usize) -> Result<()> {
    if s > samples.n() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} exceeds dimension {}",
            samples.n()
        )));
    }
    Ok(())
}

fn fit_from_theta(
    samples: &SampleSet,
    gram: &Gram,
    theta: &DVector<f64>,
    budget: usize,
    method: FitMethod,
    converged: bool,
) -> Result<SparseFit> {
    let (alpha, beta) = gram.unscale(theta);
    let nonzero: Vec<usize> = (0..gram.n).filter(|&j| beta[j] != 0.0).collect();
    let budget = budget.max(nonzero.len());
    let support = ExplanationSupport::new(nonzero, budget, gram.n)?;
    let rss = residual_sum_of_squares(samples, alpha, &beta);
    Ok(SparseFit {
        alpha,
        beta,
        support,
        rss,
        method,
        converged,
    })
}

fn refit(
    samples: &SampleSet,
    gram: &Gram,
    features: &[usize],
    budget: usize,
    method: FitMethod,
    converged: bool,
) -> Result<SparseFit> {
    let cols = gram.columns(features);
    let sub = gram.solve(&cols);
    let mut theta = DVector::zeros(gram.n + 1);
    for (a, &k) in cols.iter().enumerate() {
        theta[k] = sub[a];
    }
    fit_from_theta(samples, gram, &theta, budget, method, converged)
}

/// Unpenalized fit of `(α, β_𝓔)` with all other coefficients fixed at zero.
pub fn least_squares_on_support(
    samples: &SampleSet,
    support: &ExplanationSupport,
    config: &SolverConfig,
) -> Result<SparseFit> {
    config.validate()?;
    if support.indices().last().is_some_and(|&i| i >= samples.n()) {
        return Err(Error::InvalidSupport("index beyond feature count".into()));
    }
    check_overdetermined(samples, support.len(), config.fixed_alpha.is_none())?;
    let gram = Gram::new(samples, config);
    refit(
        samples,
        &gram,
        support.indices(),
        support.budget(),
        FitMethod::LeastSquares,
        true,
    )
}

/// Best fit with at most `s` nonzero feature coefficients.
pub fn solve_l0(
    samples: &SampleSet,
    s: usize,
    strategy: L0Strategy,
    config: &SolverConfig,
) -> Result<SparseFit> {
    config.validate()?;
    check_sparsity(samples, s)?;
    check_overdetermined(samples, s, config.fixed_alpha.is_none())?;
    let gram = Gram::new(samples, config);
    match strategy {
        L0Strategy::Exhaustive => {
            subsets::check_enumerable(samples.n())?;
            let tol = RSS_TIE_TOLERANCE * gram.yy;
            let (mask, _) = subsets::argmin(gram.n, s, tol, |mask| {
                gram.support_rss(&crate::model::mask_indices(mask))
            });
            let features = crate::model::mask_indices(mask);
            refit(samples, &gram, &features, s, FitMethod::L0Exhaustive, true)
        }
        L0Strategy::Omp => {
            let features = omp_select(&gram, s);
            refit(samples, &gram, &features, s, FitMethod::Omp, true)
        }
    }
}

/// Orthogonal matching pursuit: add the column most correlated (after
/// normalization) with the current residual, then refit all active columns.
/// Stops early once an addition lowers the rss by no more than the L0 tie
/// tolerance.
fn omp_select(gram: &Gram, s: usize) -> Vec<usize> {
    let stop = 1e-10 * gram.yy.sqrt();
    let tie = RSS_TIE_TOLERANCE * gram.yy;
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    while chosen.len() < s {
        let cols = gram.columns(&chosen);
        let theta = gram.solve(&cols);
        let mut best: Option<(usize, f64)> = None;
        for j in (0..gram.n).filter(|j| !chosen.contains(j)) {
            let k = j + 1;
            let norm_sq = gram.g[(k, k)];
            if norm_sq <= 0.0 {
                continue;
            }
            let mut corr = gram.b[k];
            for (a, &c) in cols.iter().enumerate() {
                corr -= gram.g[(k, c)] * theta[a];
            }
            let score = corr.abs() / norm_sq.sqrt();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        match best {
            Some((j, score)) if score > stop => {
                let mut trial = chosen.clone();
                trial.push(j);
                trial.sort_unstable();
                if gram.support_rss(&chosen) - gram.support_rss(&trial) <= tie {
                    break;
                }
                chosen = trial;
            }
            _ => break,
        }
    }
    chosen
}

/// Soft-thresholding operator `sign(z)·max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

struct CdOutcome {
    theta: DVector<f64>,
    converged: bool,
    objective: Vec<f64>,
}

/// Cyclic coordinate descent for yy − 2θᵀb + θᵀGθ + λ‖θ₁..‖₁ starting at `theta`.
fn coordinate_descent(
    gram: &Gram,
    lambda: f64,
    mut theta: DVector<f64>,
    config: &SolverConfig,
    trace: bool,
) -> CdOutcome {
    let dim = gram.n + 1;
    let half = 0.5 * lambda;
    let objective_of = |theta: &DVector<f64>, gt: &DVector<f64>| {
        let l1: f64 = theta.iter().skip(1).map(|x| x.abs()).sum();
        gram.yy - 2.0 * theta.dot(&gram.b) + theta.dot(gt) + lambda * l1
    };
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_sweeps {
        let mut gt = &gram.g * &theta;
        if trace && history.is_empty() {
            history.push(objective_of(&theta, &gt));
        }
        let mut max_change = 0.0_f64;
        for k in 0..dim {
            if k == 0 && !gram.fits_alpha() {
                continue;
            }
            let gkk = gram.g[(k, k)];
            let old = theta[k];
            let new = if gkk > 0.0 {
                let rho = gram.b[k] - gt[k] + gkk * old;
                if k == 0 {
                    rho / gkk
                } else {
                    soft_threshold(rho, half) / gkk
                }
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                theta[k] = new;
                gt.axpy(delta, &gram.g.column(k), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if trace {
            history.push(objective_of(&theta, &gt));
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    CdOutcome {
        theta,
        converged,
        objective: history,
    }
}

fn alpha_only(gram: &Gram) -> DVector<f64> {
    let mut theta = DVector::zeros(gram.n + 1);
    if gram.fits_alpha() && gram.g[(0, 0)] > 0.0 {
        theta[0] = gram.b[0] / gram.g[(0, 0)];
    }
    theta
}

/// Smallest λ with `β = 0` optimal: `2·max_j |x_jᵀ r|`, `r` the α-only residual.
fn lambda_max_of(gram: &Gram) -> f64 {
    let theta = alpha_only(gram);
    (1..=gram.n)
        .map(|k| 2.0 * (gram.b[k] - gram.g[(k, 0)] * theta[0]).abs())
        .fold(0.0, f64::max)
}

/// `λ_max` for the samples under `config` (standardization and pinned α apply).
pub fn lambda_max(samples: &SampleSet, config: &SolverConfig) -> f64 {
    lambda_max_of(&Gram::new(samples, config))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

/// Lasso fit by cyclic coordinate descent. A fit that hits `max_sweeps` is
/// returned with `converged = false`.
pub fn solve_lasso(samples: &SampleSet, lambda: f64, config: &SolverConfig) -> Result<SparseFit> {
    solve_lasso_with_trace(samples, lambda, config).map(|(fit, _)| fit)
}

/// [`solve_lasso`] that also returns the penalized objective before the first
/// sweep and after every sweep.
pub fn solve_lasso_with_trace(
    samples: &SampleSet,
    lambda: f64,
    config: &SolverConfig,
) -> Result<(SparseFit, Vec<f64>)> {
    config.validate()?;
    check_lambda(lambda)?;
    let gram = Gram::new(samples, config);
    let out = coordinate_descent(&gram, lambda, alpha_only(&gram), config, true);
    if !out.converged {
        log::warn!("lasso did not converge in {} sweeps", config.max_sweeps);
    }
    let fit = fit_from_theta(
        samples,
        &gram,
        &out.theta,
        gram.n,
        FitMethod::Lasso { lambda },
        out.converged,
    )?;
    Ok((fit, out.objective))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub support_size: usize,
    pub support: ExplanationSupport,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    /// Debiased fit on the selected support.
    pub fit: SparseFit,
    /// Every evaluated λ in decreasing order.
    pub points: Vec<PathPoint>,
}

const REFINE_STEPS: usize = 40;

/// Walks a geometric λ grid from `λ_max` down with warm starts and keeps the
/// point whose support is as large as possible without exceeding `s` (largest
/// λ among equals). When the grid jumps over size `s`, the gap is bisected.
/// A smaller path support wins if its debiased rss is within the L0 tie
/// tolerance. The chosen support is refitted without penalty.
pub fn lasso_path(samples: &SampleSet, s: usize, config: &SolverConfig) -> Result<LassoPath> {
    config.validate()?;
    check_sparsity(samples, s)?;
    let gram = Gram::new(samples, config);
    let n = gram.n;
    let lmax = lambda_max_of(&gram);

    let point = |lambda: f64, theta: &DVector<f64>, converged: bool| -> PathPoint {
        let idx: Vec<usize> = (0..n).filter(|&j| theta[j + 1] != 0.0).collect();
        PathPoint {
            lambda,
            support_size: idx.len(),
            support: ExplanationSupport::new(idx, n, n).expect("indices are in range"),
            converged,
        }
    };

    if !(lmax > 0.0) {
        let theta = alpha_only(&gram);
        let points = vec![point(0.0, &theta, true)];
        let fit = fit_from_theta(samples, &gram, &theta, s, FitMethod::Lasso { lambda: 0.0 }, true)?;
        return Ok(LassoPath { fit, points });
    }

    let steps = config.path_points - 1;
    let mut points = Vec::with_capacity(config.path_points);
    let mut thetas = Vec::with_capacity(config.path_points);
    let mut theta = alpha_only(&gram);
    for k in 0..=steps {
        let lambda = lmax * config.path_ratio.powf(k as f64 / steps as f64);
        let out = coordinate_descent(&gram, lambda, theta, config, false);
        theta = out.theta;
        points.push(point(lambda, &theta, out.converged));
        thetas.push(theta.clone());
    }

    let best_size = points
        .iter()
        .filter(|p| p.support_size <= s)
        .map(|p| p.support_size)
        .max()
        .unwrap_or(0);
    if best_size < s {
        if let Some(over) = points.iter().position(|p| p.support_size > s) {
            if over > 0 {
                let (mut hi, mut lo) = (points[over - 1].lambda, points[over].lambda);
                let mut warm = thetas[over - 1].clone();
                for _ in 0..REFINE_STEPS {
                    let mid = (hi * lo).sqrt();
                    let out = coordinate_descent(&gram, mid, warm.clone(), config, false);
                    let p = point(mid, &out.theta, out.converged);
                    let size = p.support_size;
                    points.push(p);
                    if size <= s {
                        hi = mid;
                        warm = out.theta;
                        if size == s {
                            break;
                        }
                    } else {
                        lo = mid;
                    }
                }
            }
        }
    }
    points.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));

    let chosen = points
        .iter()
        .filter(|p| p.support_size <= s)
        .max_by(|a, b| {
            a.support_size
                .cmp(&b.support_size)
                .then_with(|| a.lambda.total_cmp(&b.lambda))
        })
        .expect("λ_max yields an empty support")
        .clone();
    // a larger support whose debiased rss is tied with a smaller path support
    // (within the L0 tolerance) is not worth its extra features
    let tol = RSS_TIE_TOLERANCE * gram.yy;
    let bound = gram.support_rss(chosen.support.indices()) + tol;
    let chosen = points
        .iter()
        .filter(|p| p.support_size <= chosen.support_size)
        .filter(|p| gram.support_rss(p.support.indices()) <= bound)
        .min_by(|a, b| {
            a.support_size
                .cmp(&b.support_size)
                .then_with(|| b.lambda.total_cmp(&a.lambda))
        })
        .unwrap_or(&chosen)
        .clone();

    let mut fit = refit(
        samples,
        &gram,
        chosen.support.indices(),
        s,
        FitMethod::Lasso {
            lambda: chosen.lambda,
        },
        chosen.converged,
    )?;
    // refit may drop a coefficient that is exactly zero; keep the budget honest
    fit.support = ExplanationSupport::new(fit.support.indices().to_vec(), s, n)?;
    Ok(LassoPath { fit, points })
}
