//! Conditional variance and conditional mutual information for the Gaussian
//! model, via Schur complements of the joint covariance.
//!
//! For jointly Gaussian variables and scalar `ŷ`,
//!
//! ```text
//! I(e; ŷ | u) = ½ ln σ²(ŷ | u) − ½ ln σ²(ŷ | u, x_𝓔)
//! σ²(ŷ | z) = Var(ŷ) − Cov(ŷ, z) Cov(z)⁺ Cov(z, ŷ)
//! ```
//!
//! Values are in nats. When the explanation determines `ŷ` exactly the
//! conditional variance hits the floor and the MI is reported as infinite.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, PINV_RELATIVE_CUTOFF};
use crate::model::{ExplanationSupport, JointMoments};
use crate::subsets::{self, lex_cmp};

/// Default variance floor as a fraction of `Var(ŷ)`.
pub const DEFAULT_FLOOR_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiValue {
    /// Conditional MI in nats; `f64::INFINITY` when the floor was hit.
    pub nats: f64,
    /// σ²(ŷ | u)
    pub numerator_var: f64,
    /// σ²(ŷ | u, x_𝓔)
    pub denominator_var: f64,
}

impl MiValue {
    pub fn is_infinite(&self) -> bool {
        self.nats.is_infinite()
    }
}

/// Serializes a nonnegative number, writing the literal `"inf"` for +∞.
pub fn serialize_nats<S: Serializer>(nats: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if nats.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*nats)
    }
}

/// Text form used in CSV cells.
pub fn format_nats(nats: f64) -> String {
    if nats.is_infinite() {
        "inf".to_string()
    } else {
        format!("{nats}")
    }
}

/// `max(1e-12·Var(ŷ), f64::MIN_POSITIVE)`.
pub fn default_floor(moments: &JointMoments) -> f64 {
    (DEFAULT_FLOOR_FRACTION * moments.prediction_variance()).max(f64::MIN_POSITIVE)
}

fn check_support(moments: &JointMoments, support: &ExplanationSupport) -> Result<()> {
    match support.indices().last() {
        Some(&i) if i >= moments.n() => Err(Error::InvalidSupport(format!(
            "index {} out of range 1..={}",
            i + 1,
            moments.n()
        ))),
        _ => Ok(()),
    }
}

/// σ²(ŷ | u, x_𝓔), clamped at zero.
pub fn conditional_variance(moments: &JointMoments, support: &ExplanationSupport) -> Result<f64> {
    check_support(moments, support)?;
    Ok(conditional_variance_on(moments, support.indices()))
}

pub(crate) fn conditional_variance_on(moments: &JointMoments, features: &[usize]) -> f64 {
    let sigma = moments.sigma();
    let mut cond = Vec::with_capacity(features.len() + 1);
    cond.push(moments.summary_index());
    cond.extend_from_slice(features);
    let g = linalg::submatrix(sigma, &cond);
    let c: DVector<f64> = linalg::subrow(sigma, moments.prediction_index(), &cond);
    let explained = linalg::pinv_quadratic_form(&g, &c, PINV_RELATIVE_CUTOFF);
    (moments.prediction_variance() - explained).max(0.0)
}

pub(crate) fn conditional_variance_mask(moments: &JointMoments, mask: u32) -> f64 {
    conditional_variance_on(moments, &crate::model::mask_indices(mask))
}

/// I(x_𝓔; ŷ | u) with an explicit variance floor.
pub fn conditional_mi(
    moments: &JointMoments,
    support: &ExplanationSupport,
    floor: f64,
) -> Result<MiValue> {
    if !(floor > 0.0) {
        return Err(Error::InvalidFloor(floor));
    }
    check_support(moments, support)?;
    let num = conditional_variance_on(moments, &[]);
    let den = conditional_variance_on(moments, support.indices());
    Ok(mi_from_variances(num, den, floor))
}

/// [`conditional_mi`] with [`default_floor`].
pub fn conditional_mi_default(
    moments: &JointMoments,
    support: &ExplanationSupport,
) -> Result<MiValue> {
    conditional_mi(moments, support, default_floor(moments))
}

pub(crate) fn mi_from_variances(num: f64, den: f64, floor: f64) -> MiValue {
    let nats = if num <= floor {
        0.0
    } else if den <= floor {
        f64::INFINITY
    } else {
        (0.5 * (num / den).ln()).max(0.0)
    };
    MiValue {
        nats,
        numerator_var: num,
        denominator_var: den,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEntry {
    pub support: ExplanationSupport,
    #[serde(rename = "mi_nats", serialize_with = "serialize_nats")]
    pub nats: f64,
    #[serde(rename = "cond_var")]
    pub conditional_variance: f64,
    #[serde(skip)]
    mask: u32,
}

/// Every subset of size ≤ `s`, sorted by decreasing MI then lexicographic support.
pub fn mi_table(moments: &JointMoments, s: usize) -> Result<Vec<MiEntry>> {
    let n = moments.n();
    subsets::check_enumerable(n)?;
    if s > n {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} exceeds dimension {n}"
        )));
    }
    let floor = default_floor(moments);
    let num = conditional_variance_on(moments, &[]);
    let mut entries: Vec<MiEntry> = subsets::masks_up_to(n, s)
        .map(|mask| {
            let den = conditional_variance_mask(moments, mask);
            let mi = mi_from_variances(num, den, floor);
            MiEntry {
                support: ExplanationSupport::from_mask(mask, s),
                nats: mi.nats,
                conditional_variance: den,
                mask,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.nats
            .total_cmp(&a.nats)
            .then_with(|| lex_cmp(a.mask, b.mask))
    });
    Ok(entries)
}

/// Writes the table as CSV with columns `support,mi_nats,cond_var`.
pub fn write_mi_table_csv<W: Write>(entries: &[MiEntry], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::io("<mi table>", std::io::Error::other(e));
    wtr.write_record(["support", "mi_nats", "cond_var"])
        .map_err(to_err)?;
    for e in entries {
        wtr.write_record([
            e.support.to_string(),
            format_nats(e.nats),
            format!("{}", e.conditional_variance),
        ])
        .map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<mi table>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianModel;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn moments(n: usize, w: &[f64], v: &[f64]) -> JointMoments {
        GaussianModel::new(
            DMatrix::identity(n, n),
            DVector::from_row_slice(w),
            DVector::from_row_slice(v),
        )
        .unwrap()
        .analytic_moments()
    }

    fn sup(idx: &[usize], n: usize) -> ExplanationSupport {
        ExplanationSupport::exact(idx.iter().map(|i| i - 1).collect(), n).unwrap()
    }

    /// Hand-coded Schur complement on the 4x4 block (ŷ | u, x₁) for
    /// model(I₃, w=(1,1,0), v=(0,0,1)):
    /// conditioning covariance G = [[Var u, Cov(u,x₁)], [Cov(x₁,u), Var x₁]] = I₂,
    /// cross row c = (Cov(ŷ,u), Cov(ŷ,x₁)) = (0, 1), so σ² = 2 − cᵀ I c = 1.
    fn schur_oracle_2x2(var_y: f64, g: [[f64; 2]; 2], c: [f64; 2]) -> f64 {
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let inv = [
            [g[1][1] / det, -g[0][1] / det],
            [-g[1][0] / det, g[0][0] / det],
        ];
        let q = c[0] * (inv[0][0] * c[0] + inv[0][1] * c[1])
            + c[1] * (inv[1][0] * c[0] + inv[1][1] * c[1]);
        var_y - q
    }

    #[test]
    fn conditional_variance_examples() {
        let m = moments(3, &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        assert_relative_eq!(conditional_variance(&m, &sup(&[], 3)).unwrap(), 2.0, epsilon = 1e-12);
        let s = m.sigma();
        let oracle = schur_oracle_2x2(
            s[(3, 3)],
            [[s[(4, 4)], s[(4, 0)]], [s[(0, 4)], s[(0, 0)]]],
            [s[(3, 4)], s[(3, 0)]],
        );
        assert_relative_eq!(oracle, 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            conditional_variance(&m, &sup(&[1], 3)).unwrap(),
            oracle,
            epsilon = 1e-12
        );

        let w = [0.3, -1.2, 2.0];
        let m = moments(3, &w, &w);
        for idx in [&[][..], &[1], &[2, 3], &[1, 2, 3]] {
            assert!(conditional_variance(&m, &sup(idx, 3)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn conditional_mi_examples() {
        let m = moments(3, &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        assert_eq!(conditional_mi_default(&m, &sup(&[], 3)).unwrap().nats, 0.0);
        let mi = conditional_mi_default(&m, &sup(&[1], 3)).unwrap();
        assert_relative_eq!(mi.nats, 0.5 * 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(mi.nats, 0.34657359, epsilon = 1e-8);
        let mi = conditional_mi_default(&m, &sup(&[1, 2], 3)).unwrap();
        assert!(mi.is_infinite());
        assert!(matches!(
            conditional_mi(&m, &sup(&[1], 3), 0.0),
            Err(Error::InvalidFloor(_))
        ));
        assert!(matches!(
            conditional_mi(&m, &sup(&[1], 3), -1.0),
            Err(Error::InvalidFloor(_))
        ));
    }

    #[test]
    fn out_of_range_support_is_rejected() {
        let m = moments(2, &[1.0, 0.0], &[0.0, 1.0]);
        let s = ExplanationSupport::exact(vec![2], 3).unwrap();
        assert!(matches!(conditional_variance(&m, &s), Err(Error::InvalidSupport(_))));
    }

    #[test]
    fn mi_table_examples() {
        let m = moments(2, &[1.0, 0.5], &[0.0, 1.0]);
        assert_eq!(mi_table(&m, 1).unwrap().len(), 3);

        let m = moments(3, &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        let t = mi_table(&m, 1).unwrap();
        assert_eq!(t[0].support.one_based(), vec![1]);
        assert_eq!(t[1].support.one_based(), vec![2]);
        assert_eq!(t[0].nats, t[1].nats);
        assert_eq!(t.last().unwrap().nats, 0.0);

        let zero = GaussianModel::new(
            DMatrix::zeros(3, 3),
            DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            DVector::from_row_slice(&[0.0, 1.0, 0.0]),
        )
        .unwrap()
        .analytic_moments();
        assert!(mi_table(&zero, 3).unwrap().iter().all(|e| e.nats == 0.0));
        assert!(matches!(mi_table(&zero, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mi_table_csv_format() {
        let m = moments(3, &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]);
        let t = mi_table(&m, 2).unwrap();
        let mut buf = Vec::new();
        write_mi_table_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "support,mi_nats,cond_var");
        assert!(lines[1].starts_with("1;2,inf,"));
        assert!(lines.iter().any(|l| l.starts_with(",0,")));
    }
}
