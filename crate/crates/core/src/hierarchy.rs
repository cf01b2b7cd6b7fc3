//! The iterative hypersphere pipeline and its two baselines.
//!
//! Each iteration draws hypersphere centers in the current space, scores and
//! samples inside every sphere, fits one extractor on the union of what the
//! spheres kept, then projects the whole training matrix through it. The
//! fitted models are kept in a [`ProjectionHistory`] so held-out data can be
//! replayed through the same chain.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::{debug, info, warn};

use crate::classifiers::{ClassifierKind, ClassifierSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::feature_extraction::{self, ExtractorParams, Method, ProjectionModel};
use crate::feature_selection::{feature_scores, random_subset, select_top, ScoreMode, SelectionMode};
use crate::numerics::Matrix;
use crate::rng::{self, Rng};
use crate::sampling::{
    advance_schedule, draw_centers, draw_centers_on_data, init_schedule, points_in_sphere, stratified_sample, Hypersphere,
    ScheduleState, DEFAULT_ITERATIONS,
};

// Stream ids under derive(seed, iteration, _).
const CENTER_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;
const SELECT_STREAM: u64 = 2;
const SPHERE_STREAM_BASE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pipeline {
    Raw,
    Original,
    Hierarchical,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Raw, Pipeline::Original, Pipeline::Hierarchical];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Raw => "raw",
            Pipeline::Original => "original",
            Pipeline::Hierarchical => "hierarchical",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown pipeline {s:?} (allowed: raw, original, hierarchical)"))
    }
}

/// How spheres are formed in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SphereMode {
    /// Random centers and the scheduled radius.
    #[default]
    Scheduled,
    /// One sphere containing every training point. Used to check that a
    /// single iteration reduces to the one-shot pipeline.
    WholeData,
}

/// Where sphere centers are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CenterMode {
    /// Uniform in the per-feature bounding box of the current data.
    BoundingBox,
    /// On distinct training rows.
    #[default]
    DataPoints,
}

/// Unit in which the scheduled radius is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusScale {
    /// Multiples of the mean per-feature standard deviation.
    Sigma,
    /// Multiples of `σ̄·√d`, the typical distance scale of a `d`-feature cloud.
    #[default]
    SigmaSqrtD,
}

/// Which spheres contribute to an iteration's union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SphereFilter {
    /// Every non-empty sphere contributes its sample; spheres too small or
    /// too pure to score features contribute no feature votes.
    #[default]
    NonEmpty,
    /// Only spheres with at least 3 points from at least 2 classes count.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub fs_mode: SelectionMode,
    pub fe_method: Method,
    pub pipeline: Pipeline,
    pub iterations: usize,
    pub classifier: ClassifierSpec,
    pub seed: u64,
    pub extractor: ExtractorParams,
    pub sphere_mode: SphereMode,
    pub center_mode: CenterMode,
    pub radius_scale: RadiusScale,
    pub sphere_filter: SphereFilter,
    /// Overrides the scheduled sampling fraction when set.
    pub fixed_fraction: Option<f64>,
}

impl PipelineConfig {
    pub fn new(fs_mode: SelectionMode, fe_method: Method, pipeline: Pipeline) -> Self {
        Self {
            fs_mode,
            fe_method,
            pipeline,
            iterations: DEFAULT_ITERATIONS,
            classifier: ClassifierSpec::default_for(ClassifierKind::Lda),
            seed: 0,
            extractor: ExtractorParams::default(),
            sphere_mode: SphereMode::Scheduled,
            center_mode: CenterMode::default(),
            radius_scale: RadiusScale::default(),
            sphere_filter: SphereFilter::default(),
            fixed_fraction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::param("iteration count must be at least 1"));
        }
        if let Some(p) = self.fixed_fraction {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::param(format!("sampling fraction must be in (0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Models fitted by a run, in application order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectionHistory {
    pub models: Vec<ProjectionModel>,
    /// Schedule in force when each stored model was fitted.
    pub schedule_log: Vec<ScheduleState>,
    /// Input-space features each stored model consumed.
    pub feature_trace: Vec<Vec<usize>>,
}

impl ProjectionHistory {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.models.last().map(|m| m.out_dim)
    }

    /// Checks that every model consumes the previous model's output.
    pub fn check_chain(&self) -> Result<()> {
        for (i, w) in self.models.windows(2).enumerate() {
            if w[0].out_dim != w[1].input_dim {
                return Err(Error::shape(format!(
                    "model {} outputs {} dimensions but model {} expects {}",
                    i + 1,
                    w[0].out_dim,
                    i + 2,
                    w[1].input_dim
                )));
            }
        }
        Ok(())
    }

    fn push(&mut self, model: ProjectionModel, schedule: ScheduleState) {
        self.feature_trace.push(model.selected_features.clone());
        self.schedule_log.push(schedule);
        self.models.push(model);
    }
}

/// Replays `x` through every model of `h` in order.
pub fn apply_history(h: &ProjectionHistory, x: &Matrix) -> Result<Matrix> {
    let mut cur = x.clone();
    for m in &h.models {
        cur = feature_extraction::project(m, &cur)?;
    }
    Ok(cur)
}

fn distinct_classes(idx: &[usize], y: &[usize]) -> usize {
    idx.iter().map(|&i| y[i]).collect::<BTreeSet<_>>().len()
}

fn check_train(train: &Dataset) -> Result<()> {
    if train.class_count() < 2 || distinct_classes(&(0..train.n()).collect::<Vec<_>>(), &train.y) < 2 {
        return Err(Error::degenerate("training data needs at least 2 classes"));
    }
    Ok(())
}

fn select_features(
    mode: SelectionMode,
    x: &Matrix,
    y: &[usize],
    keep: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    let d = x.cols();
    let keep = keep.clamp(1, d);
    match mode {
        SelectionMode::None => Ok((0..d).collect()),
        SelectionMode::Random => random_subset(d, keep, rng),
        SelectionMode::Correlation => select_top(&feature_scores(x, y, ScoreMode::Correlation)?, keep),
        SelectionMode::Chi2 => select_top(&feature_scores(x, y, ScoreMode::Chi2)?, keep),
    }
}

/// What the spheres of one iteration contributed.
#[derive(Debug, Default)]
struct Harvest {
    instances: BTreeSet<usize>,
    features: BTreeSet<usize>,
    used: usize,
}

fn harvest(x: &Matrix, y: &[usize], s: &ScheduleState, cfg: &PipelineConfig) -> Result<Harvest> {
    let tau = s.tau as u64;
    let spheres = match cfg.sphere_mode {
        SphereMode::WholeData => vec![Hypersphere::new(x.column_means(), f64::INFINITY)?],
        SphereMode::Scheduled => {
            let mut rng = rng::derive(cfg.seed, tau, CENTER_STREAM);
            let centers = match cfg.center_mode {
                CenterMode::BoundingBox => draw_centers(x, s.n_spheres, &mut rng),
                CenterMode::DataPoints => draw_centers_on_data(x, s.n_spheres, &mut rng),
            };
            centers
                .into_iter()
                .map(|c| Hypersphere::new(c, s.radius))
                .collect::<Result<_>>()?
        }
    };
    let p = cfg.fixed_fraction.unwrap_or(s.p_tau);
    let mut out = Harvest::default();
    for (k, sphere) in spheres.iter().enumerate() {
        let members = points_in_sphere(x, sphere)?;
        let scorable = members.len() >= 3 && distinct_classes(&members, y) >= 2;
        let keep = match cfg.sphere_filter {
            SphereFilter::NonEmpty => !members.is_empty(),
            SphereFilter::Mixed => scorable,
        };
        if !keep {
            debug!("iteration {}: sphere {k} skipped ({} points)", s.tau, members.len());
            continue;
        }
        let mut rng = rng::derive(cfg.seed, tau, SPHERE_STREAM_BASE + k as u64);
        let scored = matches!(cfg.fs_mode, SelectionMode::Correlation | SelectionMode::Chi2);
        if !scored || scorable {
            let local = x.select_rows(&members);
            let local_y: Vec<usize> = members.iter().map(|&i| y[i]).collect();
            out.features.extend(select_features(cfg.fs_mode, &local, &local_y, s.n_features, &mut rng)?);
        }
        out.instances.extend(stratified_sample(&members, y, p, &mut rng)?);
        out.used += 1;
    }
    Ok(out)
}

/// Runs the iterative pipeline on `train` (already standardized).
///
/// Returns the fitted history and the projected training set. Iterations in
/// which no sphere qualifies, or whose union is too small for a supervised
/// extractor, are logged and skipped.
pub fn run_hierarchical(train: &Dataset, cfg: &PipelineConfig) -> Result<(ProjectionHistory, Dataset)> {
    cfg.validate()?;
    check_train(train)?;
    let y = &train.y;
    let mut x = train.x.clone();
    let mut history = ProjectionHistory::default();
    let mut schedule = init_schedule(&x, cfg.iterations)?;
    if cfg.radius_scale == RadiusScale::SigmaSqrtD {
        let f = (x.cols() as f64).sqrt();
        schedule.radius *= f;
        schedule.delta_r *= f;
    }

    for tau in 1..=cfg.iterations {
        if tau > 1 {
            schedule = advance_schedule(&schedule, x.cols());
        }
        let h = harvest(&x, y, &schedule, cfg)?;
        if h.used == 0 {
            info!("iteration {tau}: no sphere qualified, nothing fitted");
            continue;
        }
        let inst: Vec<usize> = h.instances.into_iter().collect();
        let feats: Vec<usize> = h.features.into_iter().collect();
        if feats.is_empty() {
            info!("iteration {tau}: no sphere could score features, nothing fitted");
            continue;
        }
        if cfg.fe_method.is_supervised() && (inst.len() < 3 || distinct_classes(&inst, y) < 2) {
            warn!(
                "iteration {tau}: union of {} points is degenerate for {}, skipped",
                inst.len(),
                cfg.fe_method
            );
            continue;
        }
        let xs = x.select_rows(&inst).select_cols(&feats);
        let ys: Vec<usize> = inst.iter().map(|&i| y[i]).collect();
        let mut rng = rng::derive(cfg.seed, tau as u64, FIT_STREAM);
        let model = feature_extraction::fit(cfg.fe_method, &xs, &ys, schedule.fe_dim, &cfg.extractor, &mut rng)?
            .with_selection(feats, x.cols())?;
        debug!(
            "iteration {tau}: {} spheres, {} points, {} -> {} dims",
            h.used,
            inst.len(),
            x.cols(),
            model.out_dim
        );
        x = feature_extraction::project(&model, &x)?;
        history.push(model, schedule.clone());
    }

    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let out = train.with_values(x)?;
    Ok((history, out))
}

/// Keep count and output dimension of the one-shot pipeline, `⌈0.9·d⌉`.
pub fn original_keep(d: usize) -> usize {
    (9 * d).div_ceil(10).max(1)
}

/// One global selection and one extractor fit on the whole training set.
pub fn run_original(train: &Dataset, cfg: &PipelineConfig) -> Result<(ProjectionHistory, Dataset)> {
    cfg.validate()?;
    check_train(train)?;
    let d = train.d();
    let keep = original_keep(d);
    let mut sel_rng = rng::derive(cfg.seed, 1, SELECT_STREAM);
    let feats = select_features(cfg.fs_mode, &train.x, &train.y, keep, &mut sel_rng)?;
    let xs = train.x.select_cols(&feats);
    // same stream as the first hierarchical fit
    let mut rng = rng::derive(cfg.seed, 1, FIT_STREAM);
    let model = feature_extraction::fit(cfg.fe_method, &xs, &train.y, keep, &cfg.extractor, &mut rng)?
        .with_selection(feats, d)?;
    let projected = feature_extraction::project(&model, &train.x)?;
    let schedule = init_schedule(&train.x, 1)?;
    let mut history = ProjectionHistory::default();
    history.push(model, schedule);
    Ok((history, train.with_values(projected)?))
}

/// Dispatches on `cfg.pipeline`; the raw pipeline returns an empty history.
pub fn run_pipeline(train: &Dataset, cfg: &PipelineConfig) -> Result<(ProjectionHistory, Dataset)> {
    match cfg.pipeline {
        Pipeline::Raw => Ok((ProjectionHistory::default(), train.clone())),
        Pipeline::Original => run_original(train, cfg),
        Pipeline::Hierarchical => run_hierarchical(train, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::standardize;
    use crate::feature_extraction::Kernel;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn blobs(seed: u64, n: usize, d: usize, k: usize) -> Dataset {
        let mut rng = seeded(seed);
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let data: Vec<f64> = y
            .iter()
            .flat_map(|&c| {
                (0..d)
                    .map(|j| if j % k == c { 2.0 } else { 0.0 } + rng.gen_range(-1.0..1.0))
                    .collect::<Vec<_>>()
            })
            .collect();
        let ds = Dataset::from_parts(Matrix::new(n, d, data).unwrap(), y).unwrap();
        standardize(&ds).unwrap().0
    }

    fn whole(method: Method) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(SelectionMode::None, method, Pipeline::Hierarchical);
        cfg.iterations = 1;
        cfg.sphere_mode = SphereMode::WholeData;
        cfg.fixed_fraction = Some(1.0);
        cfg.seed = 11;
        cfg
    }

    fn max_col_sign_diff(a: &Matrix, b: &Matrix) -> f64 {
        assert_eq!(a.shape(), b.shape());
        (0..a.cols())
            .map(|j| {
                let (ca, cb) = (a.col(j), b.col(j));
                let same = ca.iter().zip(&cb).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                let flip = ca.iter().zip(&cb).map(|(u, v)| (u + v).abs()).fold(0.0, f64::max);
                same.min(flip)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_global_sphere_matches_original() {
        let ds = blobs(1, 90, 6, 3);
        for method in [Method::Pca, Method::Fda, Method::Gda, Method::Rica] {
            let cfg = whole(method);
            let (_, h) = run_hierarchical(&ds, &cfg).unwrap();
            let (_, o) = run_original(&ds, &cfg).unwrap();
            assert!(max_col_sign_diff(&h.x, &o.x) <= 1e-8, "{method}");
        }
    }

    #[test]
    fn replay_reproduces_training_output() {
        let ds = blobs(2, 120, 5, 3);
        let mut cfg = PipelineConfig::new(SelectionMode::Correlation, Method::Pca, Pipeline::Hierarchical);
        cfg.seed = 3;
        let (h, out) = run_hierarchical(&ds, &cfg).unwrap();
        assert!(h.len() <= cfg.iterations);
        assert_eq!(apply_history(&h, &ds.x).unwrap(), out.x);
        h.check_chain().unwrap();
        for m in &h.models {
            assert!(m.out_dim <= m.input_dim);
        }
    }

    #[test]
    fn empty_history_is_identity() {
        let ds = blobs(3, 30, 3, 2);
        assert_eq!(apply_history(&ProjectionHistory::default(), &ds.x).unwrap(), ds.x);
    }

    #[test]
    fn single_model_history_is_project() {
        let ds = blobs(4, 40, 4, 2);
        let cfg = PipelineConfig::new(SelectionMode::None, Method::Pca, Pipeline::Original);
        let (h, out) = run_original(&ds, &cfg).unwrap();
        assert_eq!(h.feature_trace[0], vec![0, 1, 2, 3]);
        let p = feature_extraction::project(&h.models[0], &ds.x).unwrap();
        assert_eq!(apply_history(&h, &ds.x).unwrap(), p);
        assert_eq!(out.x, p);
        assert!(apply_history(&h, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn original_fda_clamps_to_classes() {
        let ds = blobs(5, 90, 4, 3);
        let cfg = PipelineConfig::new(SelectionMode::None, Method::Fda, Pipeline::Original);
        let (h, out) = run_original(&ds, &cfg).unwrap();
        assert_eq!(h.models[0].requested_dim, 4);
        assert_eq!(out.d(), 2);
    }

    #[test]
    fn original_pca_variance_matches_eigenvalues() {
        let ds = blobs(6, 80, 5, 2);
        let cfg = PipelineConfig::new(SelectionMode::None, Method::Pca, Pipeline::Original);
        let (_, out) = run_original(&ds, &cfg).unwrap();
        let cov = crate::numerics::covariance(&ds.x, true).unwrap();
        let eig = crate::numerics::symmetric_eigen(&cov).unwrap();
        let proj_cov = crate::numerics::covariance(&out.x, true).unwrap();
        for j in 0..out.d() {
            assert!((proj_cov[(j, j)] - eig.values[j]).abs() <= 1e-9 * eig.values[0]);
        }
    }

    #[test]
    fn hierarchical_is_deterministic() {
        let ds = blobs(7, 150, 6, 3);
        let mut cfg = PipelineConfig::new(SelectionMode::Random, Method::Gda, Pipeline::Hierarchical);
        cfg.seed = 99;
        let a = run_hierarchical(&ds, &cfg).unwrap();
        let b = run_hierarchical(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_iterations_empty_is_an_error() {
        // every sphere holds 2 points of one class: nothing can score
        // features, and the mixed filter rejects every sphere
        let two = Dataset::from_parts(
            Matrix::from_rows(&[[0.0], [1000.0], [0.0], [1000.0]]).unwrap(),
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let mut cfg = PipelineConfig::new(SelectionMode::Correlation, Method::Pca, Pipeline::Hierarchical);
        assert!(matches!(run_hierarchical(&two, &cfg), Err(Error::EmptyHistory)));
        cfg.fs_mode = SelectionMode::None;
        cfg.sphere_filter = SphereFilter::Mixed;
        assert!(matches!(run_hierarchical(&two, &cfg), Err(Error::EmptyHistory)));
        // single-class spheres still contribute their points by default
        cfg.sphere_filter = SphereFilter::NonEmpty;
        let (h, _) = run_hierarchical(&two, &cfg).unwrap();
        assert_eq!(h.len(), cfg.iterations);
    }

    #[test]
    fn linear_gda_whole_sphere_runs() {
        let ds = blobs(9, 60, 3, 2);
        let mut cfg = whole(Method::Gda);
        cfg.extractor.gda_kernel = Kernel::Linear;
        let (h, out) = run_hierarchical(&ds, &cfg).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(out.d(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn dimension_chain_holds(seed in any::<u64>(), method in 0usize..4, fs in 1usize..4) {
            let ds = blobs(seed, 90, 6, 3);
            let mut cfg = PipelineConfig::new(SelectionMode::ALL[fs], Method::ALL[method], Pipeline::Hierarchical);
            cfg.seed = seed;
            cfg.extractor.rica_max_iters = 30;
            match run_hierarchical(&ds, &cfg) {
                Ok((h, out)) => {
                    h.check_chain().unwrap();
                    prop_assert!(h.len() <= cfg.iterations);
                    prop_assert_eq!(h.models[0].input_dim, 6);
                    for m in &h.models {
                        prop_assert!(m.out_dim <= m.input_dim);
                    }
                    prop_assert_eq!(out.d(), h.output_dim().unwrap());
                }
                Err(Error::EmptyHistory) => {}
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }
}
