//! Evaluation classifiers: brute-force kNN, Gaussian LDA/QDA and a Gini
//! random forest.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, cholesky_log_det, covariance, forward_substitute, squared_distance, Matrix,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    Lda,
    Knn,
    RandomForest,
    Qda,
}

impl ClassifierKind {
    /// Column order used in result tables.
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Lda,
        ClassifierKind::Knn,
        ClassifierKind::RandomForest,
        ClassifierKind::Qda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "LDA",
            ClassifierKind::Knn => "KNN",
            ClassifierKind::RandomForest => "RF",
            ClassifierKind::Qda => "QDA",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("randomforest") || t.eq_ignore_ascii_case("random_forest") {
            return Ok(ClassifierKind::RandomForest);
        }
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown classifier {s:?} (allowed: LDA, KNN, RF, QDA)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(12),
            min_leaf: 1,
        }
    }
}

/// A classifier with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Knn { k: usize },
    Lda { reg: f64 },
    Qda { shrink: f64, reg: f64 },
    RandomForest(ForestParams),
}

impl ClassifierSpec {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Knn => ClassifierSpec::Knn { k: 5 },
            ClassifierKind::Lda => ClassifierSpec::Lda { reg: 1e-6 },
            ClassifierKind::Qda => ClassifierSpec::Qda { shrink: 0.1, reg: 1e-6 },
            ClassifierKind::RandomForest => ClassifierSpec::RandomForest(ForestParams::default()),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Knn { .. } => ClassifierKind::Knn,
            ClassifierSpec::Lda { .. } => ClassifierKind::Lda,
            ClassifierSpec::Qda { .. } => ClassifierKind::Qda,
            ClassifierSpec::RandomForest(_) => ClassifierKind::RandomForest,
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[usize], rng: &mut Rng) -> Result<TrainedClassifier> {
        match self {
            ClassifierSpec::Knn { k } => fit_knn(x, y, *k).map(TrainedClassifier::Knn),
            ClassifierSpec::Lda { reg } => fit_lda(x, y, *reg).map(TrainedClassifier::Gaussian),
            ClassifierSpec::Qda { shrink, reg } => {
                fit_qda(x, y, *shrink, *reg).map(TrainedClassifier::Gaussian)
            }
            ClassifierSpec::RandomForest(p) => fit_rf(x, y, p, rng).map(TrainedClassifier::Forest),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedClassifier {
    Knn(Knn),
    Gaussian(Gaussian),
    Forest(Forest),
}

impl TrainedClassifier {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        match self {
            TrainedClassifier::Knn(c) => c.predict(x),
            TrainedClassifier::Gaussian(c) => c.predict(x),
            TrainedClassifier::Forest(c) => c.predict(x),
        }
    }
}

fn check_training(x: &Matrix, y: &[usize]) -> Result<usize> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.rows() == 0 {
        return Err(Error::degenerate("empty training set"));
    }
    Ok(y.iter().max().map_or(0, |m| m + 1))
}

fn check_query(x: &Matrix, dim: usize) -> Result<()> {
    if x.cols() != dim {
        return Err(Error::shape(format!(
            "classifier trained on {dim} features, query has {}",
            x.cols()
        )));
    }
    Ok(())
}

/// Most frequent label, smallest label on ties.
fn plurality(votes: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub k: usize,
    pub class_count: usize,
}

pub fn fit_knn(x: &Matrix, y: &[usize], k: usize) -> Result<Knn> {
    let class_count = check_training(x, y)?;
    if k < 1 || k > x.rows() {
        return Err(Error::param(format!("k = {k} must be in 1..={}", x.rows())));
    }
    Ok(Knn {
        x: x.clone(),
        y: y.to_vec(),
        k,
        class_count,
    })
}

impl Knn {
    /// Unweighted Euclidean majority vote. Equal distances favour the lower
    /// training index; tied votes favour the smaller label.
    pub fn predict(&self, q: &Matrix) -> Result<Vec<usize>> {
        check_query(q, self.x.cols())?;
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        Ok(q.row_iter()
            .map(|row| {
                let mut d: Vec<(f64, usize)> = self
                    .x
                    .row_iter()
                    .enumerate()
                    .map(|(i, t)| (squared_distance(row, t), i))
                    .collect();
                if self.k < d.len() {
                    d.select_nth_unstable_by(self.k - 1, by_dist);
                }
                let mut votes = vec![0; self.class_count];
                for &(_, i) in &d[..self.k] {
                    votes[self.y[i]] += 1;
                }
                plurality(&votes)
            })
            .collect())
    }
}

/// Gaussian class-conditional model; LDA shares one covariance factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub means: Vec<Vec<f64>>,
    /// Cholesky factors, one shared (LDA) or one per class (QDA).
    pub factors: Vec<Matrix>,
    pub log_dets: Vec<f64>,
    pub log_priors: Vec<f64>,
}

fn class_split(y: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    if k < 2 {
        return Err(Error::degenerate("need at least 2 classes"));
    }
    if let Some(c) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::degenerate(format!(
            "class {c} has {} training points, need at least 2",
            members[c].len()
        )));
    }
    Ok(members)
}

fn factor_regularized(mut cov: Matrix, reg: f64) -> Result<Matrix> {
    let d = cov.rows();
    let mean_diag = cov.trace() / d as f64;
    for i in 0..d {
        cov[(i, i)] += reg * mean_diag;
    }
    cholesky(&cov)
}

pub fn fit_lda(x: &Matrix, y: &[usize], reg: f64) -> Result<Gaussian> {
    let k = check_training(x, y)?;
    let members = class_split(y, k)?;
    let (n, d) = x.shape();
    if n <= k {
        return Err(Error::degenerate("LDA needs more points than classes"));
    }
    let mut pooled = Matrix::zeros(d, d);
    let mut means = Vec::with_capacity(k);
    for m in &members {
        let xc = x.select_rows(m);
        // (n_c − 1)·cov_c is the class's scatter
        let scatter = covariance(&xc, true)?.scale((m.len() - 1) as f64);
        pooled = pooled.add(&scatter)?;
        means.push(xc.column_means());
    }
    let pooled = pooled.scale(1.0 / (n - k) as f64);
    let factor = factor_regularized(pooled, reg)?;
    let log_det = cholesky_log_det(&factor);
    Ok(Gaussian {
        means,
        log_dets: vec![log_det; k],
        factors: vec![factor],
        log_priors: members
            .iter()
            .map(|m| (m.len() as f64 / n as f64).ln())
            .collect(),
    })
}

pub fn fit_qda(x: &Matrix, y: &[usize], shrink: f64, reg: f64) -> Result<Gaussian> {
    if !(0.0..=1.0).contains(&shrink) {
        return Err(Error::param(format!("shrink must be in [0, 1], got {shrink}")));
    }
    let k = check_training(x, y)?;
    let members = class_split(y, k)?;
    let n = x.rows();
    let mut means = Vec::with_capacity(k);
    let mut factors = Vec::with_capacity(k);
    let mut log_dets = Vec::with_capacity(k);
    for m in &members {
        let xc = x.select_rows(m);
        let cov = covariance(&xc, true)?;
        let diag = Matrix::from_diag(&cov.diag());
        let shrunk = cov.scale(1.0 - shrink).add(&diag.scale(shrink))?;
        let f = factor_regularized(shrunk, reg)?;
        log_dets.push(cholesky_log_det(&f));
        factors.push(f);
        means.push(xc.column_means());
    }
    Ok(Gaussian {
        means,
        factors,
        log_dets,
        log_priors: members
            .iter()
            .map(|m| (m.len() as f64 / n as f64).ln())
            .collect(),
    })
}

impl Gaussian {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Unnormalized log posterior of each class at `q`.
    pub fn log_scores(&self, q: &[f64]) -> Vec<f64> {
        let mut diff = vec![0.0; q.len()];
        (0..self.means.len())
            .map(|c| {
                let f = if self.factors.len() == 1 { &self.factors[0] } else { &self.factors[c] };
                for ((d, a), b) in diff.iter_mut().zip(q).zip(&self.means[c]) {
                    *d = a - b;
                }
                let z = forward_substitute(f, &diff);
                let maha: f64 = z.iter().map(|v| v * v).sum();
                self.log_priors[c] - 0.5 * self.log_dets[c] - 0.5 * maha
            })
            .collect()
    }

    /// Class posteriors via log-sum-exp.
    pub fn posteriors(&self, q: &Matrix) -> Result<Vec<Vec<f64>>> {
        check_query(q, self.dim())?;
        Ok(q.row_iter()
            .map(|r| {
                let s = self.log_scores(r);
                let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let norm = top + s.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
                s.iter().map(|v| (v - norm).exp()).collect()
            })
            .collect())
    }

    pub fn predict(&self, q: &Matrix) -> Result<Vec<usize>> {
        check_query(q, self.dim())?;
        Ok(q.row_iter()
            .map(|r| {
                let s = self.log_scores(r);
                let mut best = 0;
                for c in 1..s.len() {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Bootstrap sample the tree was grown on.
    pub sample: Vec<usize>,
}

impl Tree {
    pub fn predict_one(&self, q: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if q[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub class_count: usize,
    pub dim: usize,
    pub seed: u64,
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    k: usize,
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_for_feature(&self, idx: &[usize], f: usize, parent: &[usize]) -> Option<SplitChoice> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
        let n = order.len();
        let parent_gini = gini(parent, n);
        let mut left = vec![0; self.k];
        let mut right = parent.to_vec();
        let mut best: Option<SplitChoice> = None;
        for pos in 0..n - 1 {
            let c = self.y[order[pos]];
            left[c] += 1;
            right[c] -= 1;
            let v = self.x[(order[pos], f)];
            let next = self.x[(order[pos + 1], f)];
            if !(next > v) {
                continue;
            }
            let nl = pos + 1;
            let nr = n - nl;
            if nl < self.params.min_leaf || nr < self.params.min_leaf {
                continue;
            }
            let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            let decrease = parent_gini - child;
            if best.as_ref().map_or(true, |b| decrease > b.decrease) {
                let mut threshold = 0.5 * (v + next);
                if !(threshold < next) {
                    threshold = v;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    decrease,
                });
            }
        }
        best
    }

    fn grow(&mut self, idx: &[usize], depth: usize, rng: &mut Rng) -> usize {
        let counts = self.counts(idx);
        let majority = plurality(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let at_depth = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || at_depth || idx.len() < 2 * self.params.min_leaf {
            return self.leaf(majority);
        }

        let d = self.x.cols();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let (first, rest) = features.split_at(self.mtry.min(d));
        let mut candidates = first.to_vec();
        candidates.sort_unstable();
        let mut best: Option<SplitChoice> = None;
        for &f in &candidates {
            if let Some(s) = self.best_for_feature(idx, f, &counts) {
                if best.as_ref().map_or(true, |b| s.decrease > b.decrease) {
                    best = Some(s);
                }
            }
        }
        // every sampled feature was constant here: keep drawing
        if best.is_none() {
            best = rest.iter().find_map(|&f| self.best_for_feature(idx, f, &counts));
        }
        let Some(split) = best else {
            return self.leaf(majority);
        };

        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[(i, split.feature)] <= split.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority });
        let left = self.grow(&l, depth + 1, rng);
        let right = self.grow(&r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn leaf(&mut self, class: usize) -> usize {
        self.nodes.push(Node::Leaf { class });
        self.nodes.len() - 1
    }
}

/// Grows one tree on `sample` (indices into `x`, repeats allowed).
pub fn fit_tree(x: &Matrix, y: &[usize], sample: Vec<usize>, params: &ForestParams, rng: &mut Rng) -> Result<Tree> {
    let k = check_training(x, y)?;
    let mut g = Grower {
        x,
        y,
        k,
        params,
        mtry: (x.cols() as f64).sqrt().ceil().max(1.0) as usize,
        nodes: Vec::new(),
    };
    g.grow(&sample, 0, rng);
    Ok(Tree {
        nodes: g.nodes,
        sample,
    })
}

pub fn fit_rf(x: &Matrix, y: &[usize], params: &ForestParams, rng: &mut Rng) -> Result<Forest> {
    let k = check_training(x, y)?;
    if x.rows() < 2 {
        return Err(Error::degenerate("random forest needs at least 2 instances"));
    }
    if params.n_trees < 1 || params.min_leaf < 1 {
        return Err(Error::param("need n_trees >= 1 and min_leaf >= 1"));
    }
    let seed: u64 = rng.gen();
    let n = x.rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::derive(seed, t as u64, 0);
            let sample: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            fit_tree(x, y, sample, params, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        class_count: k,
        dim: x.cols(),
        seed,
    })
}

impl Forest {
    /// Plurality vote over trees; ties go to the smaller label.
    pub fn predict(&self, q: &Matrix) -> Result<Vec<usize>> {
        check_query(q, self.dim)?;
        Ok(q.row_iter()
            .map(|r| {
                let mut votes = vec![0; self.class_count];
                for t in &self.trees {
                    votes[t.predict_one(r)] += 1;
                }
                plurality(&votes)
            })
            .collect())
    }
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape(format!(
            "accuracy needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Rng};
    use proptest::prelude::*;

    fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    // Sort every training point by (distance, index), vote over the first k.
    fn knn_oracle(x: &Matrix, y: &[usize], k: usize, q: &[f64]) -> usize {
        let mut all: Vec<(f64, usize)> = (0..x.rows())
            .map(|i| {
                let d: f64 = x.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let kk = y.iter().max().unwrap() + 1;
        let mut votes = vec![0; kk];
        for &(_, i) in &all[..k] {
            votes[y[i]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        votes.iter().position(|&v| v == top).unwrap()
    }

    #[test]
    fn knn_self_and_nearest() {
        let mut rng = seeded(1);
        let x = random_matrix(&mut rng, 30, 3);
        let y: Vec<usize> = (0..30).map(|i| i % 4).collect();
        let c = fit_knn(&x, &y, 1).unwrap();
        assert_eq!(c.predict(&x).unwrap(), y);

        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let c = fit_knn(&x, &[0, 1], 1).unwrap();
        assert_eq!(c.predict(&Matrix::from_rows(&[[0.1, 0.0]]).unwrap()).unwrap(), vec![0]);
        assert!(fit_knn(&x, &[0, 1], 3).is_err());
        assert!(c.predict(&Matrix::from_rows(&[[0.1]]).unwrap()).is_err());
    }

    #[test]
    fn knn_tie_breaks() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let c = fit_knn(&x, &[1, 0], 2).unwrap();
        assert_eq!(c.predict(&Matrix::from_rows(&[[0.0]]).unwrap()).unwrap(), vec![0]);

        // duplicates at distance 0, k = 2 takes indices 0 and 1 of the three
        let x = Matrix::from_rows(&[[0.0], [0.0], [0.0]]).unwrap();
        let c = fit_knn(&x, &[1, 2, 0], 2).unwrap();
        assert_eq!(c.predict(&Matrix::from_rows(&[[0.0]]).unwrap()).unwrap(), vec![1]);

        // votes 2 A, 2 B, 1 C
        let x = Matrix::from_rows(&[[0.0], [0.1], [0.2], [0.3], [0.4]]).unwrap();
        let c = fit_knn(&x, &[1, 2, 1, 2, 0], 5).unwrap();
        assert_eq!(c.predict(&Matrix::from_rows(&[[0.0]]).unwrap()).unwrap(), vec![1]);
    }

    #[test]
    fn knn_matches_sort_all_oracle() {
        let mut rng = seeded(2);
        let x = random_matrix(&mut rng, 50, 3);
        let y: Vec<usize> = (0..50).map(|_| rng.gen_range(0..3)).collect();
        let c = fit_knn(&x, &y, 5).unwrap();
        let q = random_matrix(&mut rng, 20, 3);
        let got = c.predict(&q).unwrap();
        for (i, g) in got.iter().enumerate() {
            assert_eq!(*g, knn_oracle(&x, &y, 5, q.row(i)));
        }
    }

    fn two_gaussians(rng: &mut Rng, n: usize, offset: f64, scale1: f64) -> (Matrix, Vec<usize>) {
        let normal = rand_distr_normal;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let s = if c == 0 { 1.0 } else { scale1 };
            let m = if c == 0 { 0.0 } else { offset };
            rows.push(vec![m + s * normal(rng), m + s * normal(rng)]);
            y.push(c);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    // Box-Muller, so the tests need no extra crate.
    fn rand_distr_normal(rng: &mut Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn lda_nearer_mean_and_normalized_posteriors() {
        let x = Matrix::from_rows(&[[-1.0], [0.0], [1.0], [9.0], [10.0], [11.0]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let c = fit_lda(&x, &y, 1e-6).unwrap();
        assert_eq!(c.predict(&Matrix::from_rows(&[[2.0]]).unwrap()).unwrap(), vec![0]);
        for p in c.posteriors(&Matrix::from_rows(&[[2.0], [5.0], [30.0]]).unwrap()).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn lda_boundary_is_bisector() {
        // symmetric isotropic clouds around (0,0) and (4,2), equal priors
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, (mx, my)) in [(0usize, (0.0, 0.0)), (1, (4.0, 2.0))] {
            for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                rows.push(vec![mx + dx, my + dy]);
                y.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let c = fit_lda(&x, &y, 1e-6).unwrap();
        let dir = [4.0 / 20f64.sqrt(), 2.0 / 20f64.sqrt()];
        let eps = 1e-6;
        let q = Matrix::from_rows(&[
            [2.0 - eps * dir[0], 1.0 - eps * dir[1]],
            [2.0 + eps * dir[0], 1.0 + eps * dir[1]],
        ])
        .unwrap();
        assert_eq!(c.predict(&q).unwrap(), vec![0, 1]);
    }

    #[test]
    fn lda_shift_invariant() {
        let mut rng = seeded(3);
        let (x, y) = two_gaussians(&mut rng, 80, 1.5, 1.0);
        let q = random_matrix(&mut rng, 40, 2).scale(3.0);
        let shift = [17.0, -4.0];
        let neg: Vec<f64> = shift.iter().map(|v| -v).collect();
        let a = fit_lda(&x, &y, 1e-6).unwrap().predict(&q).unwrap();
        let b = fit_lda(&x.center_with(&neg), &y, 1e-6).unwrap().predict(&q.center_with(&neg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn qda_matches_lda_under_equal_covariances() {
        let mut rng = seeded(4);
        let (x, y) = two_gaussians(&mut rng, 200, 2.0, 1.0);
        let l = fit_lda(&x, &y, 1e-6).unwrap().predict(&x).unwrap();
        let q = fit_qda(&x, &y, 0.1, 1e-6).unwrap().predict(&x).unwrap();
        let agree = l.iter().zip(&q).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / 200.0 >= 0.99, "agreement {agree}/200");
    }

    #[test]
    fn qda_prefers_narrow_class_near_zero() {
        let mut rng = seeded(5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            let s = if c == 0 { 1.0 } else { 10.0 };
            rows.push(vec![s * rand_distr_normal(&mut rng)]);
            y.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let c = fit_qda(&x, &y, 0.1, 1e-6).unwrap();
        let q = Matrix::from_rows(&[[0.0], [0.5], [-0.5], [30.0]]).unwrap();
        assert_eq!(c.predict(&q).unwrap(), vec![0, 0, 0, 1]);
        for p in c.posteriors(&q).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_needs_two_points_per_class() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0]]).unwrap();
        assert!(fit_lda(&x, &[0, 0, 1], 1e-6).is_err());
        assert!(fit_qda(&x, &[0, 0, 1], 0.1, 1e-6).is_err());
    }

    #[test]
    fn tree_root_split_oracle() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]).unwrap();
        let p = ForestParams { n_trees: 1, max_depth: None, min_leaf: 1 };
        let t = fit_tree(&x, &[0, 0, 1, 1], vec![0, 1, 2, 3], &p, &mut seeded(0)).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            n => panic!("expected split, got {n:?}"),
        }
    }

    #[test]
    fn trees_fit_their_bootstrap_exactly() {
        let mut rng = seeded(6);
        let x = random_matrix(&mut rng, 60, 4);
        let y: Vec<usize> = (0..60).map(|i| usize::from(x[(i, 0)] + x[(i, 1)] > 0.0)).collect();
        let p = ForestParams { n_trees: 10, max_depth: None, min_leaf: 1 };
        let f = fit_rf(&x, &y, &p, &mut seeded(7)).unwrap();
        for t in &f.trees {
            assert!(t.sample.iter().all(|&i| t.predict_one(x.row(i)) == y[i]));
        }
        let g = fit_rf(&x, &y, &p, &mut seeded(7)).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn forest_vote_rules() {
        let leaf = |c| Tree { nodes: vec![Node::Leaf { class: c }], sample: vec![] };
        let f = Forest { trees: vec![leaf(0), leaf(0), leaf(1)], class_count: 2, dim: 1, seed: 0 };
        let q = Matrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(f.predict(&q).unwrap(), vec![0]);
        let f = Forest { trees: vec![leaf(2), leaf(1)], class_count: 3, dim: 1, seed: 0 };
        assert_eq!(f.predict(&q).unwrap(), vec![1]);
        let f = Forest { trees: vec![leaf(2); 4], class_count: 3, dim: 1, seed: 0 };
        assert_eq!(f.predict(&q).unwrap(), vec![2]);
        assert!(f.predict(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn knn_equals_oracle(seed in any::<u64>(), n in 5usize..120, d in 1usize..6, k in 1usize..8) {
            let mut rng = seeded(seed);
            // coarse grid values so distance ties actually occur
            let x = Matrix::new(n, d, (0..n * d).map(|_| rng.gen_range(0..4) as f64).collect()).unwrap();
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            prop_assume!(y.contains(&2));
            let k = k.min(n);
            let c = fit_knn(&x, &y, k).unwrap();
            let q = Matrix::new(10, d, (0..10 * d).map(|_| rng.gen_range(0..4) as f64).collect()).unwrap();
            let got = c.predict(&q).unwrap();
            for i in 0..10 {
                prop_assert_eq!(got[i], knn_oracle(&x, &y, k, q.row(i)));
            }
        }

        #[test]
        fn training_accuracy_floor(seed in any::<u64>(), offset in 0.5f64..3.0, k in 2usize..4) {
            let mut rng = seeded(seed);
            let n = 60;
            let y: Vec<usize> = (0..n).map(|i| i % k).collect();
            let data: Vec<f64> = y
                .iter()
                .flat_map(|&c| {
                    let r = &mut rng;
                    let a = c as f64 * offset + rand_distr_normal(r);
                    let b = rand_distr_normal(r);
                    [a, b, rand_distr_normal(r)]
                })
                .collect();
            let x = Matrix::new(n, 3, data).unwrap();
            for kind in ClassifierKind::ALL {
                let c = ClassifierSpec::default_for(kind).fit(&x, &y, &mut rng).unwrap();
                let acc = accuracy(&c.predict(&x).unwrap(), &y).unwrap();
                prop_assert!(acc >= 1.0 / k as f64, "{kind} {acc}");
            }
        }

        #[test]
        fn forest_floor_on_noise(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let x = random_matrix(&mut rng, 40, 3);
            let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
            let c = ClassifierSpec::default_for(ClassifierKind::RandomForest).fit(&x, &y, &mut rng).unwrap();
            let acc = accuracy(&c.predict(&x).unwrap(), &y).unwrap();
            prop_assert!(acc >= 0.5, "{acc}");
        }
    }
}
