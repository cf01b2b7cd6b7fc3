use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::classifiers::{accuracy, ClassifierKind, ClassifierSpec};
use crate::dataset::{load_csv, split_stratified, standardize, Dataset};
use crate::error::{Error, Result};
use crate::feature_extraction::Method;
use crate::feature_selection::SelectionMode;
use crate::hierarchy::{apply_history, run_pipeline, Pipeline, PipelineConfig, ProjectionHistory};
use crate::persist::save_history;
use crate::rng::{self, fnv1a, mix64};

use super::config::ExperimentGrid;

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub dataset: String,
    pub pipeline: Pipeline,
    /// `None` on raw rows, which ignore selection and extraction.
    pub fs_mode: Option<SelectionMode>,
    pub fe_method: Option<Method>,
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub final_dim: Option<usize>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One projection shared by every classifier of the grid.
#[derive(Debug, Clone)]
struct Unit {
    dataset: usize,
    seed: u64,
    pipeline: Pipeline,
    fs_mode: Option<SelectionMode>,
    fe_method: Option<Method>,
}

impl Unit {
    fn identity(&self, grid: &ExperimentGrid) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            grid.datasets[self.dataset].name,
            self.pipeline,
            self.fs_mode.map_or("-", |m| m.name()),
            self.fe_method.map_or("-", |m| m.name()),
            self.seed
        )
    }
}

/// Split seed shared by every cell of (dataset, seed).
pub fn split_seed(master: u64, dataset: &str, seed: u64) -> u64 {
    mix64(master ^ fnv1a(&format!("split|{dataset}|{seed}")))
}

/// Seed of a cell, from the master seed and the cell's textual identity.
pub fn cell_seed(master: u64, identity: &str) -> u64 {
    mix64(master ^ fnv1a(identity))
}

fn units(grid: &ExperimentGrid) -> Vec<Unit> {
    let mut out = Vec::new();
    for dataset in 0..grid.datasets.len() {
        for &seed in &grid.seeds {
            for &pipeline in &grid.pipelines {
                if pipeline == Pipeline::Raw {
                    out.push(Unit { dataset, seed, pipeline, fs_mode: None, fe_method: None });
                    continue;
                }
                for &fs in &grid.fs_modes {
                    for &fe in &grid.fe_methods {
                        out.push(Unit {
                            dataset,
                            seed,
                            pipeline,
                            fs_mode: Some(fs),
                            fe_method: Some(fe),
                        });
                    }
                }
            }
        }
    }
    out
}

struct Prepared {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn prepare(ds: &Dataset, grid: &ExperimentGrid, name: &str, seed: u64) -> Result<Prepared> {
    let split = split_stratified(ds, grid.fractions, split_seed(grid.master_seed, name, seed))?;
    // standardization is fitted on the training partition only
    let (train, params) = standardize(&split.train)?;
    let val = split.validation.with_values(params.apply(&split.validation.x)?)?;
    let test = split.test.with_values(params.apply(&split.test.x)?)?;
    Ok(Prepared { train, val, test })
}

/// Fits the unit's pipeline on the training partition.
fn fit_projection(p: &Prepared, unit: &Unit, grid: &ExperimentGrid, seed: u64) -> Result<(ProjectionHistory, Dataset)> {
    let mut cfg = PipelineConfig::new(
        unit.fs_mode.unwrap_or(SelectionMode::None),
        unit.fe_method.unwrap_or(Method::Pca),
        unit.pipeline,
    );
    cfg.iterations = grid.iterations;
    cfg.seed = seed;
    cfg.extractor = grid.extractor.clone();
    cfg.center_mode = grid.center_mode;
    cfg.radius_scale = grid.radius_scale;
    cfg.sphere_filter = grid.sphere_filter;
    run_pipeline(&p.train, &cfg)
}

fn score(
    spec: &ClassifierSpec,
    train: &Dataset,
    val: &crate::numerics::Matrix,
    test: &crate::numerics::Matrix,
    p: &Prepared,
    seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let t0 = Instant::now();
    let mut rng = rng::derive(seed, 0, 0);
    let model = spec.fit(&train.x, &train.y, &mut rng)?;
    let fit = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let val_acc = accuracy(&model.predict(val)?, &p.val.y)?;
    let test_acc = accuracy(&model.predict(test)?, &p.test.y)?;
    Ok((val_acc, test_acc, fit, t1.elapsed().as_secs_f64()))
}

fn run_unit(unit: &Unit, data: &[Dataset], grid: &ExperimentGrid) -> Vec<ResultRecord> {
    let name = &grid.datasets[unit.dataset].name;
    let identity = unit.identity(grid);
    let base = |c: &ClassifierSpec| ResultRecord {
        dataset: name.clone(),
        pipeline: unit.pipeline,
        fs_mode: unit.fs_mode,
        fe_method: unit.fe_method,
        classifier: c.kind(),
        seed: unit.seed,
        final_dim: None,
        val_acc: None,
        test_acc: None,
        fit_seconds: 0.0,
        predict_seconds: 0.0,
        status: "ok".to_string(),
    };
    let failed = |e: &Error| -> Vec<ResultRecord> {
        warn!("{identity}: {e}");
        grid.classifiers
            .iter()
            .map(|c| ResultRecord { status: format!("failed: {e}"), ..base(c) })
            .collect()
    };

    let t0 = Instant::now();
    let staged = prepare(&data[unit.dataset], grid, name, unit.seed).and_then(|p| {
        let (history, train) = fit_projection(&p, unit, grid, cell_seed(grid.master_seed, &identity))?;
        Ok((p, history, train))
    });
    let (p, history, train) = match staged {
        Ok(v) => v,
        Err(e) => return failed(&e),
    };
    let projection_fit = t0.elapsed().as_secs_f64();
    if let Some(dir) = &grid.history_dir {
        let file = dir.join(format!("{}.history", identity.replace('|', "_")));
        if let Err(e) = save_history(&history, &file) {
            warn!("cannot write {}: {e}", file.display());
        }
    }
    let t1 = Instant::now();
    let projected = apply_history(&history, &p.val.x).and_then(|v| Ok((v, apply_history(&history, &p.test.x)?)));
    let (val, test) = match projected {
        Ok(v) => v,
        Err(e) => return failed(&e),
    };
    let transform = t1.elapsed().as_secs_f64();

    grid.classifiers
        .iter()
        .map(|c| {
            let seed = cell_seed(grid.master_seed, &format!("{identity}|{}", c.kind()));
            match score(c, &train, &val, &test, &p, seed) {
                Ok((va, ta, fit, pred)) => ResultRecord {
                    final_dim: Some(train.d()),
                    val_acc: Some(va),
                    test_acc: Some(ta),
                    fit_seconds: projection_fit + fit,
                    predict_seconds: transform + pred,
                    ..base(c)
                },
                Err(e) => {
                    warn!("{identity}|{}: {e}", c.kind());
                    ResultRecord { status: format!("failed: {e}"), ..base(c) }
                }
            }
        })
        .collect()
}

/// Sort key: grid order of datasets, then pipeline, selection, method,
/// classifier and seed.
fn sort_records(records: &mut [ResultRecord], grid: &ExperimentGrid) {
    let pos = |name: &str| grid.datasets.iter().position(|d| d.name == name).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (pos(&a.dataset), a.pipeline, a.fs_mode, a.fe_method, a.classifier, a.seed).cmp(&(
            pos(&b.dataset),
            b.pipeline,
            b.fs_mode,
            b.fe_method,
            b.classifier,
            b.seed,
        ))
    });
}

/// Loads every dataset of the grid.
pub fn load_datasets(grid: &ExperimentGrid) -> Result<Vec<Dataset>> {
    grid.datasets
        .iter()
        .map(|d| {
            info!("loading {} from {}", d.name, d.path.display());
            load_csv(&d.path, &d.label, d.has_header)
        })
        .collect()
}

/// Runs every cell of `grid` on already loaded `data` (one dataset per grid
/// entry). Cell failures are recorded, never propagated.
pub fn run_grid_on(grid: &ExperimentGrid, data: &[Dataset]) -> Result<Vec<ResultRecord>> {
    grid.validate()?;
    if data.len() != grid.datasets.len() {
        return Err(Error::Parameter(format!(
            "{} datasets loaded for {} grid entries",
            data.len(),
            grid.datasets.len()
        )));
    }
    if let Some(dir) = &grid.history_dir {
        std::fs::create_dir_all(dir)?;
    }
    let work = units(grid);
    info!("running {} cells in {} projection units", grid.cell_count(), work.len());
    let go = || -> Vec<ResultRecord> { work.par_iter().flat_map_iter(|u| run_unit(u, data, grid)).collect() };
    let mut records = if grid.jobs == 0 {
        go()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(grid.jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {} workers: {e}", grid.jobs)))?
            .install(go)
    };
    sort_records(&mut records, grid);
    Ok(records)
}

pub fn run_grid(grid: &ExperimentGrid) -> Result<Vec<ResultRecord>> {
    let data = load_datasets(grid)?;
    run_grid_on(grid, &data)
}

/// Pipeline history fitted exactly as the grid would for one cell, for
/// inspection and leakage checks.
pub fn fit_cell_history(
    grid: &ExperimentGrid,
    data: &Dataset,
    dataset: &str,
    seed: u64,
    pipeline: Pipeline,
    fs_mode: SelectionMode,
    fe_method: Method,
) -> Result<ProjectionHistory> {
    let idx = grid
        .datasets
        .iter()
        .position(|d| d.name == dataset)
        .ok_or_else(|| Error::Parameter(format!("dataset {dataset:?} is not in the grid")))?;
    let unit = Unit {
        dataset: idx,
        seed,
        pipeline,
        fs_mode: (pipeline != Pipeline::Raw).then_some(fs_mode),
        fe_method: (pipeline != Pipeline::Raw).then_some(fe_method),
    };
    let p = prepare(data, grid, dataset, seed)?;
    let identity = unit.identity(grid);
    Ok(fit_projection(&p, &unit, grid, cell_seed(grid.master_seed, &identity))?.0)
}

/// Partition indices used for (dataset, seed), exposed for tests.
pub fn split_for(grid: &ExperimentGrid, data: &Dataset, dataset: &str, seed: u64) -> Result<crate::dataset::SplitDataset> {
    split_stratified(data, grid.fractions, split_seed(grid.master_seed, dataset, seed))
}
