//! Stratified k-fold cross-validation of the radius.

use rand::seq::SliceRandom;

use super::{Classifier, LabeledSamples, Method, MethodSettings};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};

/// `{a √n 10^b : a ∈ 1..9, b ∈ −3..−1}` in ascending order.
pub fn default_radius_grid(dim: usize) -> Vec<f64> {
    let root = (dim as f64).sqrt();
    let mut grid: Vec<f64> = (-3..=-1)
        .flat_map(|b| (1..=9).map(move |a| a as f64 * root * 10f64.powi(b)))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid
}

/// Fold index of every sample. Each class is shuffled and dealt round-robin,
/// continuing from where the previous class stopped.
pub fn stratified_folds(data: &LabeledSamples, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter {
            name: "folds",
            reason: format!("need at least 2, got {folds}"),
        });
    }
    let mut rng = stream(seed, StreamTag::Folds, 0);
    let mut assignment = vec![0; data.len()];
    let mut next = 0;
    for (c, mut members) in data.class_members().into_iter().enumerate() {
        if members.len() < folds {
            return Err(Error::Stratification {
                label: data.classes()[c].clone(),
                count: members.len(),
                folds,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    /// Zero for QDA.
    pub best_radius: f64,
    pub cv_score: f64,
    /// Mean held-out CCR for each grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the radius with the best mean held-out CCR; ties go to the smaller radius.
pub fn cross_validate(
    data: &LabeledSamples,
    method: Method,
    settings: &MethodSettings,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    let assignment = stratified_folds(data, folds, seed)?;
    let splits: Vec<(LabeledSamples, LabeledSamples)> = (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| assignment[i] == f);
            (data.subset(&train), data.subset(&test))
        })
        .collect();
    let mean_ccr = |radius: f64| -> Result<f64> {
        let mut total = 0.0;
        for (train, test) in &splits {
            total += Classifier::fit(method, settings, train, radius)?.score(test)?;
        }
        Ok(total / folds as f64)
    };

    if !method.uses_radius() {
        let score = mean_ccr(0.0)?;
        return Ok(CvResult {
            best_radius: 0.0,
            cv_score: score,
            scores: vec![],
        });
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut scores = Vec::with_capacity(sorted.len());
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &radius in &sorted {
        let s = mean_ccr(radius)?;
        if s > best.1 {
            best = (radius, s);
        }
        scores.push((radius, s));
    }
    Ok(CvResult {
        best_radius: best.0,
        cv_score: best.1,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian_vector, rng};

    fn separated(seed: u64, per_class: usize) -> LabeledSamples {
        let mut r = rng(seed);
        let mut feats = vec![];
        let mut labels = vec![];
        for c in 0..2 {
            for _ in 0..per_class {
                let mut x = gaussian_vector(&mut r, 2);
                x[0] += 8.0 * c as f64;
                feats.push(x);
                labels.push(format!("c{c}"));
            }
        }
        LabeledSamples::new(feats, &labels).unwrap()
    }

    #[test]
    fn grid_has_27_ascending_points() {
        let g = default_radius_grid(4);
        assert_eq!(g.len(), 27);
        assert!((g[0] - 0.002).abs() < 1e-15);
        assert!((g[26] - 1.8).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let data = separated(1, 23);
        let a = stratified_folds(&data, 5, 9).unwrap();
        assert_eq!(a, stratified_folds(&data, 5, 9).unwrap());
        assert_ne!(a, stratified_folds(&data, 5, 10).unwrap());
        for members in data.class_members() {
            let mut counts = [0usize; 5];
            for i in members {
                counts[a[i]] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1);
        }
        let tiny = separated(2, 3);
        assert!(matches!(
            stratified_folds(&tiny, 5, 0),
            Err(Error::Stratification { .. })
        ));
    }

    #[test]
    fn single_point_grid_is_returned() {
        let data = separated(3, 20);
        let r = cross_validate(
            &data,
            Method::Kqda,
            &MethodSettings::default(),
            &[0.37],
            5,
            1,
        )
        .unwrap();
        assert_eq!(r.best_radius, 0.37);
    }

    #[test]
    fn separable_data_scores_perfectly() {
        let data = separated(4, 100);
        let r = cross_validate(&data, Method::Qda, &MethodSettings::default(), &[], 5, 2).unwrap();
        assert_eq!(r.cv_score, 1.0);
        assert_eq!(r.best_radius, 0.0);
        let again =
            cross_validate(&data, Method::Qda, &MethodSettings::default(), &[], 5, 2).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn ties_pick_smallest_radius() {
        let data = separated(5, 30);
        let r = cross_validate(
            &data,
            Method::Rqda,
            &MethodSettings::default(),
            &[0.3, 0.1, 0.2],
            3,
            1,
        )
        .unwrap();
        assert_eq!(r.cv_score, 1.0);
        assert_eq!(r.best_radius, 0.1);
    }
}
