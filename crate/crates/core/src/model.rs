//! Probabilistic setup: a zero-mean Gaussian feature vector `x ~ N(0, C_x)`,
//! a linear prediction `ŷ = wᵀx` and a linear user summary `u = vᵀx`.
//!
//! All downstream computations go through [`JointMoments`], the second-moment
//! matrix of the stacked vector `(x₁, …, xₙ, ŷ, u)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for symmetry and PSD checks.
pub const PSD_RELATIVE_SLACK: f64 = 1e-10;

/// Identifies the generator behind [`GaussianModel::sample`]; echoed in reports.
pub const RNG_NAME: &str = "ChaCha20Rng/rand_chacha-0.9+StandardNormal/rand_distr-0.5";

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    cov_x: DMatrix<f64>,
    w: DVector<f64>,
    v: DVector<f64>,
}

impl GaussianModel {
    /// Validates and builds a model. Rejects asymmetric or indefinite covariances.
    pub fn new(cov_x: DMatrix<f64>, w: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        let n = cov_x.nrows();
        if !cov_x.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected square",
                cov_x.nrows(),
                cov_x.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "feature dimension must be positive".into(),
            ));
        }
        if w.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {n}x{n} but w has length {} and v has length {}",
                w.len(),
                v.len()
            )));
        }
        if cov_x.iter().chain(w.iter()).chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if !linalg::is_symmetric(&cov_x, PSD_RELATIVE_SLACK) {
            return Err(Error::NotPositiveSemidefinite(
                "covariance is not symmetric".into(),
            ));
        }
        let eig = linalg::eigen(&linalg::symmetrize(&cov_x));
        let radius = linalg::spectral_radius(&eig.eigenvalues);
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min < -PSD_RELATIVE_SLACK * radius {
            return Err(Error::NotPositiveSemidefinite(format!(
                "smallest eigenvalue {min:e} below tolerance"
            )));
        }
        Ok(Self { cov_x, w, v })
    }

    /// Random model with covariance `Q diag(λ) Qᵀ`, `Q` Haar-orthogonal,
    /// `λ` uniform on `spectrum`, and standard-normal `w`, `v`.
    pub fn random(n: usize, spectrum: (f64, f64), seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "feature dimension must be positive".into(),
            ));
        }
        let (lo, hi) = spectrum;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidArgument(format!(
                "invalid spectrum range [{lo}, {hi}]"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let gauss: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = gauss.qr().q();
        let eigen = Uniform::new_inclusive(lo, hi)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let lambdas = DVector::from_fn(n, |_, _| eigen.sample(&mut rng));
        let cov = linalg::symmetrize(&(&q * DMatrix::from_diagonal(&lambdas) * q.transpose()));
        let w = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        Self::new(cov, w, v)
    }

    pub fn n(&self) -> usize {
        self.cov_x.nrows()
    }

    pub fn cov_x(&self) -> &DMatrix<f64> {
        &self.cov_x
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    /// Exact joint covariance of `(x, ŷ, u)`.
    pub fn analytic_moments(&self) -> JointMoments {
        let n = self.n();
        let cw = &self.cov_x * &self.w;
        let cv = &self.cov_x * &self.v;
        let mut sigma = DMatrix::zeros(n + 2, n + 2);
        sigma.view_mut((0, 0), (n, n)).copy_from(&self.cov_x);
        for i in 0..n {
            sigma[(i, n)] = cw[i];
            sigma[(n, i)] = cw[i];
            sigma[(i, n + 1)] = cv[i];
            sigma[(n + 1, i)] = cv[i];
        }
        sigma[(n, n)] = self.w.dot(&cw);
        sigma[(n + 1, n + 1)] = self.v.dot(&cv);
        let cross = self.w.dot(&cv);
        sigma[(n, n + 1)] = cross;
        sigma[(n + 1, n)] = cross;
        JointMoments {
            n,
            sigma,
            source: MomentSource::Analytic,
        }
    }

    /// Draws `m` i.i.d. rows `x ~ N(0, C_x)` with `ŷ = wᵀx`, `u = vᵀx`.
    ///
    /// Deterministic for a fixed seed. Features are `L z` with `L Lᵀ = C_x`
    /// from the eigendecomposition, so singular covariances are fine.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleSet> {
        if m == 0 {
            return Err(Error::InvalidCount(0));
        }
        let n = self.n();
        let factor = linalg::psd_factor(&self.cov_x, PSD_RELATIVE_SLACK).ok_or_else(|| {
            Error::FactorizationFailure("covariance is numerically indefinite".into())
        })?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut features = DMatrix::zeros(m, n);
        let mut z = DVector::zeros(n);
        for i in 0..m {
            for k in 0..n {
                z[k] = StandardNormal.sample(&mut rng);
            }
            let x = &factor * &z;
            features.row_mut(i).copy_from(&x.transpose());
        }
        let predictions = project_rows(&features, self.w.as_slice());
        let summaries = project_rows(&features, self.v.as_slice());
        SampleSet::new(features, predictions, summaries)
    }
}

/// `out[i] = Σ_k coef[k]·rows[i,k]`, accumulated left to right from 0.0.
pub fn project_rows(rows: &DMatrix<f64>, coef: &[f64]) -> DVector<f64> {
    DVector::from_fn(rows.nrows(), |i, _| {
        let mut acc = 0.0;
        for (k, c) in coef.iter().enumerate() {
            acc += c * rows[(i, k)];
        }
        acc
    })
}

/// `m` rows of `(x⁽ⁱ⁾, ŷ⁽ⁱ⁾, u⁽ⁱ⁾)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    features: DMatrix<f64>,
    predictions: DVector<f64>,
    summaries: DVector<f64>,
}

impl SampleSet {
    pub fn new(
        features: DMatrix<f64>,
        predictions: DVector<f64>,
        summaries: DVector<f64>,
    ) -> Result<Self> {
        let m = features.nrows();
        if features.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "sample set needs at least one feature column".into(),
            ));
        }
        if m == 0 {
            return Err(Error::InvalidCount(0));
        }
        if predictions.len() != m || summaries.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} feature rows but {} predictions and {} summaries",
                predictions.len(),
                summaries.len()
            )));
        }
        let all = features
            .iter()
            .chain(predictions.iter())
            .chain(summaries.iter());
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("sample set contains NaN or infinity".into()));
        }
        Ok(Self {
            features,
            predictions,
            summaries,
        })
    }

    pub fn m(&self) -> usize {
        self.features.nrows()
    }

    pub fn n(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn predictions(&self) -> &DVector<f64> {
        &self.predictions
    }

    pub fn summaries(&self) -> &DVector<f64> {
        &self.summaries
    }

    /// `m × (n+2)` matrix with rows `(x⁽ⁱ⁾, ŷ⁽ⁱ⁾, u⁽ⁱ⁾)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (m, n) = (self.m(), self.n());
        let mut z = DMatrix::zeros(m, n + 2);
        z.view_mut((0, 0), (m, n)).copy_from(&self.features);
        z.column_mut(n).copy_from(&self.predictions);
        z.column_mut(n + 1).copy_from(&self.summaries);
        z
    }

    /// Second moments `(1/m) Σ zᵢzᵢᵀ` about zero.
    pub fn empirical_moments(&self) -> Result<JointMoments> {
        self.empirical_moments_with(false)
    }

    /// Copy with every column shifted to zero mean.
    pub fn centered(&self) -> SampleSet {
        let mut features = self.features.clone();
        for mut col in features.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        SampleSet {
            features,
            predictions: self.predictions.add_scalar(-self.predictions.mean()),
            summaries: self.summaries.add_scalar(-self.summaries.mean()),
        }
    }

    /// Like [`Self::empirical_moments`], optionally centering every column
    /// first (for external data that is not zero-mean).
    pub fn empirical_moments_with(&self, center: bool) -> Result<JointMoments> {
        let m = self.m();
        if m < 2 {
            return Err(Error::TooFewSamples { needed: 1, got: m });
        }
        let mut z = self.stacked();
        if center {
            for mut col in z.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
        }
        let sigma = linalg::symmetrize(&(z.tr_mul(&z) / m as f64));
        Ok(JointMoments {
            n: self.n(),
            sigma,
            source: MomentSource::Empirical { m },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Analytic,
    Empirical { m: usize },
}

/// Covariance of `(x₁, …, xₙ, ŷ, u)`; index `n` is `ŷ`, index `n+1` is `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMoments {
    n: usize,
    sigma: DMatrix<f64>,
    source: MomentSource,
}

impl JointMoments {
    /// Wraps a user-supplied joint covariance after checking shape and PSD.
    pub fn from_sigma(sigma: DMatrix<f64>, source: MomentSource) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() < 3 {
            return Err(Error::DimensionMismatch(
                "joint covariance must be square with at least 3 rows".into(),
            ));
        }
        if !linalg::is_symmetric(&sigma, PSD_RELATIVE_SLACK) {
            return Err(Error::NotPositiveSemidefinite(
                "joint covariance is not symmetric".into(),
            ));
        }
        let eig = linalg::eigen(&sigma);
        let radius = linalg::spectral_radius(&eig.eigenvalues);
        if eig.eigenvalues.iter().any(|&l| l < -PSD_RELATIVE_SLACK * radius) {
            return Err(Error::NotPositiveSemidefinite(
                "joint covariance has a negative eigenvalue".into(),
            ));
        }
        Ok(Self {
            n: sigma.nrows() - 2,
            sigma,
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    pub fn prediction_index(&self) -> usize {
        self.n
    }

    pub fn summary_index(&self) -> usize {
        self.n + 1
    }

    /// `Var(ŷ)`.
    pub fn prediction_variance(&self) -> f64 {
        self.sigma[(self.n, self.n)]
    }
}

/// Index set of the features shown to the user, with its size budget.
/// Indices are stored 0-based and rendered 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExplanationSupport {
    indices: Vec<usize>,
    budget: usize,
}

impl ExplanationSupport {
    /// `indices` are 0-based and must be strictly increasing and below `n`.
    pub fn new(indices: Vec<usize>, budget: usize, n: usize) -> Result<Self> {
        if indices.len() > budget {
            return Err(Error::InvalidSupport(format!(
                "{} indices exceed budget {budget}",
                indices.len()
            )));
        }
        if indices.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidSupport(
                "indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidSupport(format!(
                    "index {} out of range 1..={n}",
                    last + 1
                )));
            }
        }
        Ok(Self { indices, budget })
    }

    /// Support whose budget equals its size.
    pub fn exact(indices: Vec<usize>, n: usize) -> Result<Self> {
        let budget = indices.len();
        Self::new(indices, budget, n)
    }

    pub fn empty(budget: usize) -> Self {
        Self {
            indices: Vec::new(),
            budget,
        }
    }

    pub(crate) fn from_mask(mask: u32, budget: usize) -> Self {
        Self {
            indices: mask_indices(mask),
            budget,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Parses the semicolon-joined 1-based cell format (empty string is ∅).
    pub fn parse_cell(cell: &str, budget: usize, n: usize) -> Result<Self> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Self::new(Vec::new(), budget, n);
        }
        let mut indices = Vec::new();
        for part in cell.split(';') {
            let one: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSupport(format!("bad index {part:?}")))?;
            if one == 0 {
                return Err(Error::InvalidSupport("indices are 1-based".into()));
            }
            indices.push(one - 1);
        }
        Self::new(indices, budget, n)
    }
}

/// Semicolon-joined 1-based indices; empty string for ∅.
impl fmt::Display for ExplanationSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}", i + 1)?;
        }
        Ok(())
    }
}

impl Serialize for ExplanationSupport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

pub(crate) fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|k| mask & (1 << k) != 0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_model(n: usize, w: &[f64], v: &[f64]) -> GaussianModel {
        GaussianModel::new(
            DMatrix::identity(n, n),
            DVector::from_row_slice(w),
            DVector::from_row_slice(v),
        )
        .unwrap()
    }

    #[test]
    fn builds_identity_model() {
        let m = identity_model(3, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        assert_eq!(m.n(), 3);
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let mut c = DMatrix::identity(2, 2);
        c[(0, 1)] = 0.5;
        let err = GaussianModel::new(c, DVector::zeros(2), DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSemidefinite(_)));
    }

    #[test]
    fn rejects_indefinite_and_mismatched() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = GaussianModel::new(c, DVector::zeros(2), DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSemidefinite(_)));
        let err = GaussianModel::new(DMatrix::identity(2, 2), DVector::zeros(3), DVector::zeros(2))
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn accepts_diagonal_covariance() {
        let c = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0, 3.0]));
        let m = GaussianModel::new(
            c,
            DVector::from_row_slice(&[1.0, 1.0, 1.0]),
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
        )
        .unwrap();
        let mut eig: Vec<f64> = linalg::eigen(m.cov_x()).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_moments_block_substitution() {
        let m = identity_model(2, &[1.0, 0.0], &[0.0, 1.0]);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0,
            ],
        );
        assert_eq!(m.analytic_moments().sigma(), &expected);

        let m = identity_model(3, &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        let s = m.analytic_moments();
        assert_eq!(s.sigma()[(3, 3)], 2.0);
        assert_eq!(s.sigma()[(4, 4)], 1.0);
        assert_eq!(s.sigma()[(3, 4)], 0.0);

        let c = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0]));
        let m = GaussianModel::new(
            c,
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.0]),
        )
        .unwrap();
        let s = m.analytic_moments();
        assert_eq!(s.sigma()[(2, 2)], 2.0);
        assert_eq!(s.sigma()[(3, 3)], 2.0);
        assert_eq!(s.sigma()[(2, 3)], 2.0);
        assert_eq!(s.source(), MomentSource::Analytic);
    }

    #[test]
    fn sample_rejects_zero_count() {
        let m = identity_model(2, &[1.0, 0.0], &[0.0, 1.0]);
        assert!(matches!(m.sample(0, 1), Err(Error::InvalidCount(0))));
    }

    #[test]
    fn zero_covariance_samples_are_zero() {
        let m = GaussianModel::new(
            DMatrix::zeros(3, 3),
            DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            DVector::from_row_slice(&[1.0, 1.0, 1.0]),
        )
        .unwrap();
        let s = m.sample(10, 1).unwrap();
        assert!(s.features().iter().all(|&x| x == 0.0));
        assert!(s.predictions().iter().all(|&x| x == 0.0));
        assert!(s.summaries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = GaussianModel::random(4, (0.5, 2.0), 3).unwrap();
        assert_eq!(m.sample(50, 9).unwrap(), m.sample(50, 9).unwrap());
        assert_ne!(m.sample(50, 9).unwrap(), m.sample(50, 10).unwrap());
    }

    #[test]
    fn empirical_moments_of_zero_and_repeated_rows() {
        let zeros = SampleSet::new(DMatrix::zeros(4, 2), DVector::zeros(4), DVector::zeros(4))
            .unwrap();
        assert!(zeros.empirical_moments().unwrap().sigma().iter().all(|&x| x == 0.0));

        let row = [0.5, -1.0];
        let features = DMatrix::from_fn(5, 2, |_, j| row[j]);
        let s = SampleSet::new(
            features,
            DVector::from_element(5, 2.0),
            DVector::from_element(5, -0.25),
        )
        .unwrap();
        let sigma = s.empirical_moments().unwrap();
        let z = DVector::from_row_slice(&[0.5, -1.0, 2.0, -0.25]);
        let outer = &z * z.transpose();
        for (a, b) in sigma.sigma().iter().zip(outer.iter()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
        assert_eq!(sigma.source(), MomentSource::Empirical { m: 5 });
    }

    #[test]
    fn empirical_moments_need_two_rows() {
        let s = SampleSet::new(DMatrix::zeros(1, 2), DVector::zeros(1), DVector::zeros(1))
            .unwrap();
        assert!(matches!(
            s.empirical_moments(),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn centering_removes_column_means() {
        let features = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let s = SampleSet::new(
            features,
            DVector::from_row_slice(&[2.0, 2.0]),
            DVector::from_row_slice(&[0.0, 0.0]),
        )
        .unwrap();
        let c = s.empirical_moments_with(true).unwrap();
        assert_relative_eq!(c.sigma()[(0, 0)], 1.0);
        assert_eq!(c.sigma()[(1, 1)], 0.0);
    }

    #[test]
    fn sample_set_rejects_bad_shapes() {
        assert!(SampleSet::new(DMatrix::zeros(2, 0), DVector::zeros(2), DVector::zeros(2)).is_err());
        assert!(SampleSet::new(DMatrix::zeros(2, 1), DVector::zeros(3), DVector::zeros(2)).is_err());
        let mut f = DMatrix::zeros(2, 1);
        f[(0, 0)] = f64::NAN;
        assert!(matches!(
            SampleSet::new(f, DVector::zeros(2), DVector::zeros(2)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn support_validation_and_format() {
        let s = ExplanationSupport::new(vec![0, 2], 2, 3).unwrap();
        assert_eq!(s.to_string(), "1;3");
        assert_eq!(s.one_based(), vec![1, 3]);
        assert_eq!(ExplanationSupport::empty(2).to_string(), "");
        assert!(ExplanationSupport::new(vec![0, 1, 2], 2, 3).is_err());
        assert!(ExplanationSupport::new(vec![1, 0], 2, 3).is_err());
        assert!(ExplanationSupport::new(vec![3], 2, 3).is_err());
        assert_eq!(ExplanationSupport::parse_cell("1;3", 2, 3).unwrap(), s);
        assert!(ExplanationSupport::parse_cell("", 0, 3).unwrap().is_empty());
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
    }
}
