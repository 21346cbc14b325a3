//! Gaussian discriminant rules.
//!
//! QDA scores class `c` by `½ℓ(x; μ̂_c, Σ̂_c) + log π̂_c` with
//! `ℓ(x; μ, Σ) = −(x−μ)ᵀΣ⁻¹(x−μ) − log det Σ`. The flexible rules replace
//! `ℓ` by the optimistic log-likelihood of `{x}` over a Fisher-Rao (FQDA) or
//! KL (KQDA) ball around `Σ̂_c`, keeping the mean at `μ̂_c`.

mod cv;
mod ledoit_wolf;

pub use cv::{cross_validate, default_radius_grid, stratified_folds, CvResult};
pub use ledoit_wolf::{ledoit_wolf, ledoit_wolf_with_shrinkage, LedoitWolf};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fr_solver::{optimistic_loglik_fr, FrSolverOptions};
use crate::kl_solver::optimistic_loglik_kl;
use crate::spd::{symmetrize, SpdMatrix};

/// Feature vectors with integer class labels indexing `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSamples {
    features: Vec<DVector<f64>>,
    labels: Vec<usize>,
    classes: Vec<String>,
}

impl LabeledSamples {
    /// Classes are the distinct labels in sorted order.
    pub fn new(features: Vec<DVector<f64>>, labels: &[String]) -> Result<Self> {
        let classes: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let indices = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label collected above"))
            .collect();
        Self::from_indices(features, indices, classes)
    }

    pub fn from_indices(
        features: Vec<DVector<f64>>,
        labels: Vec<usize>,
        classes: Vec<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = features[0].len();
        for x in &features {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label index {bad} with only {} classes", classes.len()),
            });
        }
        Ok(LabeledSamples {
            features,
            labels,
            classes,
        })
    }

    /// Rows of `features` (an `N × n` matrix) with string labels.
    pub fn from_matrix(features: &DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let rows = features.row_iter().map(|r| r.transpose()).collect();
        Self::new(rows, labels)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[DVector<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Samples at `indices`, keeping the full class list.
    pub fn subset(&self, indices: &[usize]) -> Self {
        LabeledSamples {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Sample indices per class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}

/// Covariance estimator used by [`fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Unbiased sample covariance.
    Empirical,
    LedoitWolf,
    /// Unbiased sample covariance plus `ρ I`.
    LinearShrinkage(f64),
}

#[derive(Clone, Debug)]
pub struct ClassModel {
    pub label: String,
    pub prior: f64,
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

#[derive(Clone, Debug)]
pub struct GaussianClassModel {
    pub classes: Vec<ClassModel>,
    pub estimator: Estimator,
}

/// `−(x−μ)ᵀΣ⁻¹(x−μ) − log det Σ`.
pub fn gaussian_loglik(x: &DVector<f64>, mean: &DVector<f64>, cov: &SpdMatrix) -> Result<f64> {
    for len in [x.len(), mean.len()] {
        if len != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: len,
            });
        }
    }
    Ok(-cov.inv_quad_form(&(x - mean)) - cov.log_det())
}

fn class_covariance(rows: &DMatrix<f64>, estimator: Estimator) -> Result<SpdMatrix> {
    match estimator {
        Estimator::LedoitWolf => ledoit_wolf(rows),
        Estimator::Empirical | Estimator::LinearShrinkage(_) => {
            let count = rows.nrows() as f64;
            let mean = rows.row_mean();
            let mut centered = rows.clone();
            for mut row in centered.row_iter_mut() {
                row -= &mean;
            }
            let mut cov = symmetrize(&(centered.tr_mul(&centered) / (count - 1.0)));
            if let Estimator::LinearShrinkage(rho) = estimator {
                if !(rho >= 0.0) || !rho.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "shrinkage",
                        reason: format!("{rho} is not a finite nonnegative number"),
                    });
                }
                for i in 0..cov.nrows() {
                    cov[(i, i)] += rho;
                }
            }
            SpdMatrix::new(cov)
        }
    }
}

/// Fits priors `N_c/N`, class means and class covariances.
pub fn fit(data: &LabeledSamples, estimator: Estimator) -> Result<GaussianClassModel> {
    if data.classes.len() < 2 {
        return Err(Error::TooFewClasses {
            found: data.classes.len(),
        });
    }
    let total = data.len() as f64;
    let n = data.dim();
    let mut classes = Vec::with_capacity(data.classes.len());
    for (c, members) in data.class_members().into_iter().enumerate() {
        let label = data.classes[c].clone();
        if members.len() < 2 {
            return Err(Error::UnderSampledClass {
                label,
                count: members.len(),
            });
        }
        let rows = DMatrix::from_fn(members.len(), n, |i, j| data.features[members[i]][j]);
        let mean = rows.row_mean().transpose();
        let cov = class_covariance(&rows, estimator).map_err(|e| Error::InClass {
            label: label.clone(),
            source: Box::new(e),
        })?;
        classes.push(ClassModel {
            label,
            prior: members.len() as f64 / total,
            mean,
            cov,
        });
    }
    Ok(GaussianClassModel { classes, estimator })
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// `½ℓ(x; μ̂_c, Σ̂_c) + log π̂_c` per class.
pub fn qda_scores(model: &GaussianClassModel, x: &DVector<f64>) -> Result<Vec<f64>> {
    model
        .classes
        .iter()
        .map(|c| Ok(0.5 * gaussian_loglik(x, &c.mean, &c.cov)? + c.prior.ln()))
        .collect()
}

/// Class index chosen by QDA.
pub fn predict_qda(model: &GaussianClassModel, x: &DVector<f64>) -> Result<usize> {
    Ok(argmax(&qda_scores(model, x)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Fr,
    Kl,
}

#[derive(Clone, Debug)]
pub struct FlexRuleConfig {
    pub divergence: Divergence,
    /// Radius per class, indexed like the model's classes.
    pub radii: Vec<f64>,
    /// Used only for [`Divergence::Fr`].
    pub fr_options: FrSolverOptions,
}

impl FlexRuleConfig {
    /// The same radius for every class.
    pub fn uniform(divergence: Divergence, radius: f64, classes: usize) -> Self {
        FlexRuleConfig {
            divergence,
            radii: vec![radius; classes],
            fr_options: FrSolverOptions::for_classification(),
        }
    }
}

/// `½ · (optimistic log-likelihood of {x}) + log π̂_c` per class.
pub fn flex_scores(
    model: &GaussianClassModel,
    cfg: &FlexRuleConfig,
    x: &DVector<f64>,
) -> Result<Vec<f64>> {
    if cfg.radii.len() != model.classes.len() {
        return Err(Error::LengthMismatch {
            left: cfg.radii.len(),
            right: model.classes.len(),
        });
    }
    let obs = std::slice::from_ref(x);
    model
        .classes
        .iter()
        .zip(&cfg.radii)
        .map(|(c, &rho)| {
            if !(rho >= 0.0) || !rho.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "radius",
                    reason: format!("{rho} is not a finite nonnegative number"),
                });
            }
            let value = match cfg.divergence {
                Divergence::Fr => optimistic_loglik_fr(obs, &c.mean, &c.cov, rho, &cfg.fr_options),
                Divergence::Kl => optimistic_loglik_kl(obs, &c.mean, &c.cov, rho),
            }
            .map_err(|e| Error::InClass {
                label: c.label.clone(),
                source: Box::new(e),
            })?
            .0;
            Ok(0.5 * value + c.prior.ln())
        })
        .collect()
}

/// Class index chosen by the flexible rule.
pub fn predict_flex(
    model: &GaussianClassModel,
    cfg: &FlexRuleConfig,
    x: &DVector<f64>,
) -> Result<usize> {
    Ok(argmax(&flex_scores(model, cfg, x)?))
}

/// Correct classification rate.
pub fn ccr<T: PartialEq>(predictions: &[T], truth: &[T]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Discriminant rules compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Qda,
    Rqda,
    Fqda,
    Kqda,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Qda, Method::Rqda, Method::Fqda, Method::Kqda];

    pub fn uses_radius(self) -> bool {
        self != Method::Qda
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Qda => "QDA",
            Method::Rqda => "RQDA",
            Method::Fqda => "FQDA",
            Method::Kqda => "KQDA",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "QDA" => Ok(Method::Qda),
            "RQDA" => Ok(Method::Rqda),
            "FQDA" => Ok(Method::Fqda),
            "KQDA" => Ok(Method::Kqda),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// Estimator and solver settings shared by all methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    /// Covariance estimator for QDA, FQDA and KQDA.
    pub estimator: Estimator,
    pub fr_options: FrSolverOptions,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            estimator: Estimator::LedoitWolf,
            fr_options: FrSolverOptions::for_classification(),
        }
    }
}

/// A fitted rule ready to classify points.
#[derive(Clone, Debug)]
pub struct Classifier {
    model: GaussianClassModel,
    flex: Option<FlexRuleConfig>,
}

impl Classifier {
    /// Fits `method` on `train`. `radius` is ignored by QDA and is the
    /// diagonal loading for RQDA.
    pub fn fit(
        method: Method,
        settings: &MethodSettings,
        train: &LabeledSamples,
        radius: f64,
    ) -> Result<Self> {
        let estimator = match method {
            Method::Rqda => Estimator::LinearShrinkage(radius),
            _ => settings.estimator,
        };
        let model = fit(train, estimator)?;
        let flex = match method {
            Method::Fqda | Method::Kqda => {
                let divergence = if method == Method::Fqda {
                    Divergence::Fr
                } else {
                    Divergence::Kl
                };
                Some(FlexRuleConfig {
                    divergence,
                    radii: vec![radius; model.classes.len()],
                    fr_options: settings.fr_options.clone(),
                })
            }
            _ => None,
        };
        Ok(Classifier { model, flex })
    }

    pub fn model(&self) -> &GaussianClassModel {
        &self.model
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<usize> {
        match &self.flex {
            Some(cfg) => predict_flex(&self.model, cfg, x),
            None => predict_qda(&self.model, x),
        }
    }

    /// Fraction of `test` classified correctly.
    pub fn score(&self, test: &LabeledSamples) -> Result<f64> {
        let predictions = test
            .features()
            .iter()
            .map(|x| self.predict(x))
            .collect::<Result<Vec<_>>>()?;
        ccr(&predictions, test.labels())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian_vector, rng};
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn two_class_model(priors: (f64, f64)) -> GaussianClassModel {
        GaussianClassModel {
            classes: vec![
                ClassModel {
                    label: "a".into(),
                    prior: priors.0,
                    mean: v(&[-1.0, 0.0]),
                    cov: SpdMatrix::identity(2),
                },
                ClassModel {
                    label: "b".into(),
                    prior: priors.1,
                    mean: v(&[1.0, 0.0]),
                    cov: SpdMatrix::identity(2),
                },
            ],
            estimator: Estimator::Empirical,
        }
    }

    fn synthetic(seed: u64, per_class: usize, sep: f64, n: usize) -> LabeledSamples {
        let mut r = rng(seed);
        let mut feats = vec![];
        let mut labels = vec![];
        for (c, name) in ["neg", "pos"].iter().enumerate() {
            let scale = 1.0 + c as f64;
            for _ in 0..per_class {
                let mut x = gaussian_vector(&mut r, n) * scale;
                x[0] += sep * c as f64;
                feats.push(x);
                labels.push(name.to_string());
            }
        }
        LabeledSamples::new(feats, &labels).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let i = SpdMatrix::identity(2);
        assert_eq!(
            gaussian_loglik(&v(&[1.0, 2.0]), &v(&[1.0, 2.0]), &i).unwrap(),
            0.0
        );
        let e = SpdMatrix::from_diagonal(&[E, E]).unwrap();
        assert_relative_eq!(
            gaussian_loglik(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &e).unwrap(),
            -2.0
        );
        let one = SpdMatrix::identity(1);
        assert_eq!(gaussian_loglik(&v(&[1.0]), &v(&[0.0]), &one).unwrap(), -1.0);
        assert!(gaussian_loglik(&v(&[1.0]), &v(&[0.0, 0.0]), &i).is_err());
    }

    #[test]
    fn qda_examples() {
        let m = two_class_model((0.5, 0.5));
        assert_eq!(predict_qda(&m, &v(&[0.5, 0.0])).unwrap(), 1);
        assert_eq!(predict_qda(&m, &v(&[0.0, 3.0])).unwrap(), 0);
        let skewed = two_class_model((0.9, 0.1));
        assert_eq!(predict_qda(&skewed, &v(&[0.1, 0.0])).unwrap(), 0);
    }

    #[test]
    fn fit_examples() {
        let data = synthetic(1, 20, 3.0, 2);
        let m = fit(&data, Estimator::Empirical).unwrap();
        assert_eq!(m.classes[0].prior, 0.5);
        assert_eq!(m.classes[1].prior, 0.5);
        let members = data.class_members();
        for (c, idx) in members.iter().enumerate() {
            let mean = idx
                .iter()
                .map(|&i| &data.features()[i])
                .sum::<DVector<f64>>()
                / idx.len() as f64;
            assert!((&mean - &m.classes[c].mean).amax() < 1e-12);
        }
        let only_one =
            LabeledSamples::new(vec![v(&[1.0]), v(&[2.0])], &["x".into(), "x".into()]).unwrap();
        assert!(matches!(
            fit(&only_one, Estimator::LedoitWolf),
            Err(Error::TooFewClasses { .. })
        ));
        let sparse = LabeledSamples::new(
            vec![v(&[1.0]), v(&[2.0]), v(&[3.0])],
            &["x".into(), "x".into(), "y".into()],
        )
        .unwrap();
        match fit(&sparse, Estimator::LedoitWolf) {
            Err(Error::UnderSampledClass { label, count }) => {
                assert_eq!(label, "y");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let rqda = fit(&data, Estimator::LinearShrinkage(0.5)).unwrap();
        let emp = fit(&data, Estimator::Empirical).unwrap();
        let diff = rqda.classes[0].cov.as_matrix() - emp.classes[0].cov.as_matrix();
        assert!((diff - DMatrix::identity(2, 2) * 0.5).amax() < 1e-12);
    }

    #[test]
    fn ccr_examples() {
        assert_eq!(ccr(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(ccr(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(ccr(&[1, 0, 1, 1], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert!(matches!(
            ccr(&[1], &[1, 2]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(ccr::<usize>(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn vanishing_radius_matches_qda() {
        let data = synthetic(2, 40, 1.5, 3);
        let model = fit(&data, Estimator::LedoitWolf).unwrap();
        let mut r = rng(3);
        for div in [Divergence::Fr, Divergence::Kl] {
            let cfg = FlexRuleConfig::uniform(div, 1e-12, 2);
            for _ in 0..100 {
                let x = gaussian_vector(&mut r, 3) * 2.0;
                assert_eq!(
                    predict_flex(&model, &cfg, &x).unwrap(),
                    predict_qda(&model, &x).unwrap()
                );
            }
        }
    }

    #[test]
    fn own_radius_raises_own_score() {
        let model = two_class_model((0.5, 0.5));
        let x = v(&[-1.0, 0.0]);
        for div in [Divergence::Fr, Divergence::Kl] {
            let mut last = f64::NEG_INFINITY;
            for rho in [0.0, 0.1, 0.5, 1.0, 2.0] {
                let cfg = FlexRuleConfig {
                    radii: vec![rho, 0.3],
                    ..FlexRuleConfig::uniform(div, 0.0, 2)
                };
                let s = flex_scores(&model, &cfg, &x).unwrap();
                assert!(s[0] > last - 1e-9);
                last = s[0];
            }
        }
    }

    #[test]
    fn flexible_rule_recovers_misclassified_point() {
        // Class 0 truly has covariance diag(4, 1) but was estimated as I.
        // QDA sends (1.6, 0) to class 1; the widened ball around class 0 does not.
        let model = GaussianClassModel {
            classes: vec![
                ClassModel {
                    label: "wide".into(),
                    prior: 0.5,
                    mean: v(&[0.0, 0.0]),
                    cov: SpdMatrix::identity(2),
                },
                ClassModel {
                    label: "other".into(),
                    prior: 0.5,
                    mean: v(&[3.0, 0.0]),
                    cov: SpdMatrix::identity(2),
                },
            ],
            estimator: Estimator::Empirical,
        };
        let x = v(&[1.6, 0.0]);
        let truth = SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        assert_eq!(predict_qda(&model, &x).unwrap(), 1);
        // radius covering the true covariance
        let fr_radius = crate::fr::fr_distance(&truth, &SpdMatrix::identity(2)).unwrap();
        let kl_radius = crate::kl_solver::kl_divergence(&SpdMatrix::identity(2), &truth).unwrap();
        for (div, rho) in [(Divergence::Fr, fr_radius), (Divergence::Kl, kl_radius)] {
            let cfg = FlexRuleConfig {
                radii: vec![rho, 1e-6],
                ..FlexRuleConfig::uniform(div, 0.0, 2)
            };
            assert_eq!(predict_flex(&model, &cfg, &x).unwrap(), 0, "{div:?}");
        }
    }

    #[test]
    fn label_permutation_permutes_predictions() {
        let data = synthetic(4, 30, 2.0, 2);
        let swapped_labels: Vec<String> = data
            .labels()
            .iter()
            .map(|&l| {
                if l == 0 {
                    "zz".to_string()
                } else {
                    "aa".to_string()
                }
            })
            .collect();
        let swapped = LabeledSamples::new(data.features().to_vec(), &swapped_labels).unwrap();
        let a = fit(&data, Estimator::LedoitWolf).unwrap();
        let b = fit(&swapped, Estimator::LedoitWolf).unwrap();
        let mut r = rng(5);
        for _ in 0..50 {
            let x = gaussian_vector(&mut r, 2) * 3.0;
            assert_eq!(
                predict_qda(&a, &x).unwrap(),
                1 - predict_qda(&b, &x).unwrap()
            );
            let cfg = FlexRuleConfig::uniform(Divergence::Kl, 0.3, 2);
            assert_eq!(
                predict_flex(&a, &cfg, &x).unwrap(),
                1 - predict_flex(&b, &cfg, &x).unwrap()
            );
        }
    }

    #[test]
    fn fr_rule_is_affine_invariant() {
        let mut r = rng(6);
        let data = synthetic(7, 30, 2.0, 3);
        let model = fit(&data, Estimator::LedoitWolf).unwrap();
        let a = crate::testutil::gaussian_matrix(&mut r, 3, 3) + DMatrix::identity(3, 3) * 2.0;
        let b = gaussian_vector(&mut r, 3);
        let moved = GaussianClassModel {
            classes: model
                .classes
                .iter()
                .map(|c| ClassModel {
                    label: c.label.clone(),
                    prior: c.prior,
                    mean: &a * &c.mean + &b,
                    cov: SpdMatrix::new(c.cov.congruence(&a)).unwrap(),
                })
                .collect(),
            estimator: model.estimator,
        };
        let cfg = FlexRuleConfig {
            radii: vec![0.4, 0.4],
            fr_options: FrSolverOptions {
                relative_improvement_tol: 1e-12,
                ..FrSolverOptions::for_classification()
            },
            divergence: Divergence::Fr,
        };
        let mut agree = 0;
        for _ in 0..40 {
            let x = gaussian_vector(&mut r, 3) * 2.0;
            let s0 = flex_scores(&model, &cfg, &x).unwrap();
            let s1 = flex_scores(&moved, &cfg, &(&a * &x + &b)).unwrap();
            // clear margins must agree
            if (s0[0] - s0[1]).abs() > 1e-4 {
                assert_eq!(argmax(&s0), argmax(&s1));
                agree += 1;
            }
        }
        assert!(agree > 30);
    }
}
