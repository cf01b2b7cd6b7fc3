//! Label-relevance feature ranking and subset selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::Rng;

const CHI2_BINS: usize = 10;

/// How a feature subset is chosen before extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectionMode {
    None,
    Random,
    Correlation,
    Chi2,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 4] = [
        SelectionMode::None,
        SelectionMode::Random,
        SelectionMode::Correlation,
        SelectionMode::Chi2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::None => "none",
            SelectionMode::Random => "random",
            SelectionMode::Correlation => "correlation",
            SelectionMode::Chi2 => "chi2",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SelectionMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown selection mode {s:?} (allowed: none, random, correlation, chi2)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    Correlation,
    Chi2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores {
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn correlation_score(col: &[f64], y: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let ind: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            pearson(col, &ind).abs()
        })
        .fold(0.0, f64::max)
}

fn chi2_score(col: &[f64], y: &[usize], k: usize) -> f64 {
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / CHI2_BINS as f64;
    let mut table = vec![vec![0usize; k]; CHI2_BINS];
    for (v, &c) in col.iter().zip(y) {
        let b = (((v - lo) / width) as usize).min(CHI2_BINS - 1);
        table[b][c] += 1;
    }
    let n = col.len() as f64;
    let bin_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let class_tot: Vec<f64> = (0..k)
        .map(|c| table.iter().map(|r| r[c]).sum::<usize>() as f64)
        .collect();
    let mut stat = 0.0;
    for (b, row) in table.iter().enumerate() {
        for (c, &obs) in row.iter().enumerate() {
            let expected = bin_tot[b] * class_tot[c] / n;
            if expected > 0.0 {
                stat += (obs as f64 - expected).powi(2) / expected;
            }
        }
    }
    stat
}

/// Scores every column of `x` by its relevance to `y`.
///
/// Correlation mode takes the largest one-vs-rest `|Pearson|` over classes.
/// Chi-square mode bins each feature into ten equal-width bins over its
/// observed range and scores the bin-by-class contingency table.
pub fn feature_scores(x: &Matrix, y: &[usize], mode: ScoreMode) -> Result<FeatureScores> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.rows() < 3 {
        return Err(Error::degenerate("feature scoring needs at least 3 instances"));
    }
    let k = y.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; k];
        y.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(Error::degenerate("feature scoring needs at least 2 classes"));
    }
    let scores = (0..x.cols())
        .map(|j| {
            let col = x.col(j);
            match mode {
                ScoreMode::Correlation => correlation_score(&col, y, k),
                ScoreMode::Chi2 => chi2_score(&col, y, k),
            }
        })
        .collect();
    Ok(FeatureScores { scores, mode })
}

/// Indices of the `n_f` highest scores (ties to the lower index), ascending.
pub fn select_top(s: &FeatureScores, n_f: usize) -> Result<Vec<usize>> {
    let d = s.scores.len();
    if n_f < 1 || n_f > d {
        return Err(Error::param(format!("cannot keep {n_f} of {d} features")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]).then(a.cmp(&b)));
    let mut keep = order[..n_f].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Uniform draw of `n_f` distinct feature indices, ascending.
pub fn random_subset(d: usize, n_f: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n_f < 1 || n_f > d {
        return Err(Error::param(format!("cannot keep {n_f} of {d} features")));
    }
    if n_f == d {
        return Ok((0..d).collect());
    }
    let mut keep = sample(rng, d, n_f).into_vec();
    keep.sort_unstable();
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn column(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let s = feature_scores(&column(&[1.0, 2.0, 3.0, 4.0]), &[0, 0, 1, 1], ScoreMode::Correlation).unwrap();
        assert!((s.scores[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12);

        let s = feature_scores(&column(&[0.0, 0.0, 10.0, 10.0]), &[0, 0, 1, 1], ScoreMode::Correlation).unwrap();
        assert!((s.scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_scores_zero() {
        for mode in [ScoreMode::Correlation, ScoreMode::Chi2] {
            let s = feature_scores(&column(&[3.0; 5]), &[0, 1, 0, 1, 1], mode).unwrap();
            assert_eq!(s.scores, vec![0.0]);
        }
    }

    #[test]
    fn chi2_hand_table() {
        // two occupied bins (first and last), perfectly aligned with classes:
        // observed [[2,0],[0,2]], expected all 1 → 4·(1²/1) = 4
        let s = feature_scores(&column(&[0.0, 0.0, 1.0, 1.0]), &[0, 0, 1, 1], ScoreMode::Chi2).unwrap();
        assert!((s.scores[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scoring_preconditions() {
        assert!(feature_scores(&column(&[1.0, 2.0]), &[0, 1], ScoreMode::Chi2).is_err());
        assert!(feature_scores(&column(&[1.0, 2.0, 3.0]), &[1, 1, 1], ScoreMode::Chi2).is_err());
    }

    #[test]
    fn select_top_examples() {
        let s = FeatureScores { scores: vec![0.9, 0.1, 0.5], mode: ScoreMode::Correlation };
        assert_eq!(select_top(&s, 2).unwrap(), vec![0, 2]);
        assert_eq!(select_top(&s, 3).unwrap(), vec![0, 1, 2]);
        let s = FeatureScores { scores: vec![0.3; 4], mode: ScoreMode::Correlation };
        assert_eq!(select_top(&s, 2).unwrap(), vec![0, 1]);
        assert!(select_top(&s, 0).is_err());
        assert!(select_top(&s, 5).is_err());
    }

    #[test]
    fn random_subset_cases() {
        assert_eq!(random_subset(6, 6, &mut seeded(1)).unwrap(), (0..6).collect::<Vec<_>>());
        let a = random_subset(10, 3, &mut seeded(99)).unwrap();
        assert_eq!(a, random_subset(10, 3, &mut seeded(99)).unwrap());
        assert_eq!(a.len(), 3);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn random_subset_is_uniform() {
        // Binomial(10000, 1/5): mean 2000, σ = 40.
        let mut rng = seeded(2024);
        let mut hits = [0usize; 5];
        for _ in 0..10_000 {
            hits[random_subset(5, 1, &mut rng).unwrap()[0]] += 1;
        }
        for h in hits {
            assert!((h as f64 - 2000.0).abs() <= 120.0, "{hits:?}");
        }
    }

    #[test]
    fn independent_features_score_low() {
        let mut rng = seeded(5);
        let y: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let data: Vec<f64> = (0..200 * 100).map(|_| rng.gen::<f64>()).collect();
        let x = Matrix::new(200, 100, data).unwrap();
        let s = feature_scores(&x, &y, ScoreMode::Correlation).unwrap();
        let mean = s.scores.iter().sum::<f64>() / 100.0;
        assert!(mean < 0.3, "mean {mean}");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("Chi2".parse::<SelectionMode>().unwrap(), SelectionMode::Chi2);
        assert!("corr".parse::<SelectionMode>().is_err());
    }

    proptest! {
        #[test]
        fn correlation_invariant_under_positive_affine(
            v in proptest::collection::vec(-50.0f64..50.0, 6),
            slope in 0.1f64..20.0,
            shift in -100.0f64..100.0,
        ) {
            let y = [0, 1, 2, 0, 1, 2];
            let a = feature_scores(&column(&v), &y, ScoreMode::Correlation).unwrap().scores[0];
            let w: Vec<f64> = v.iter().map(|x| slope * x + shift).collect();
            let b = feature_scores(&column(&w), &y, ScoreMode::Correlation).unwrap().scores[0];
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn select_top_size(scores in proptest::collection::vec(0.0f64..1.0, 1..30), frac in 0.0f64..1.0) {
            let d = scores.len();
            let nf = ((frac * d as f64) as usize).clamp(1, d);
            let s = FeatureScores { scores, mode: ScoreMode::Chi2 };
            let keep = select_top(&s, nf).unwrap();
            prop_assert_eq!(keep.len(), nf);
            prop_assert!(keep.iter().all(|&i| i < d));
        }
    }
}
