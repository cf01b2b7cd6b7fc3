//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [grid]
//! seeds = 0, 1, 2
//! fs_modes = none, random, correlation
//!
//! [dataset iris]
//! path = ../data/iris.csv
//! label = class
//! ```
//!
//! Keys before the first header belong to `[grid]`. Relative dataset paths
//! resolve against the config file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifiers::{ClassifierKind, ClassifierSpec, ForestParams};
use crate::dataset::LabelColumn;
use crate::error::{Error, Result};
use crate::feature_extraction::{ExtractorParams, Kernel, Method};
use crate::feature_selection::SelectionMode;
use crate::hierarchy::{CenterMode, Pipeline, RadiusScale, SphereFilter};
use crate::sampling::DEFAULT_ITERATIONS;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub label: LabelColumn,
    pub has_header: bool,
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, path: impl Into<PathBuf>, label: &str) -> Self {
        Self {
            name: name.into(),
            path: path.into(),
            label: label.parse().expect("infallible"),
            has_header: true,
        }
    }
}

/// A fully specified experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub datasets: Vec<DatasetSpec>,
    pub fs_modes: Vec<SelectionMode>,
    pub fe_methods: Vec<Method>,
    pub pipelines: Vec<Pipeline>,
    pub classifiers: Vec<ClassifierSpec>,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub fractions: [f64; 3],
    pub iterations: usize,
    pub extractor: ExtractorParams,
    pub center_mode: CenterMode,
    pub radius_scale: RadiusScale,
    pub sphere_filter: SphereFilter,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Where fitted histories are written, if anywhere.
    pub history_dir: Option<PathBuf>,
}

impl ExperimentGrid {
    /// Grid over `datasets` with every other field at its default.
    pub fn new(datasets: Vec<DatasetSpec>) -> Self {
        Self {
            datasets,
            fs_modes: vec![SelectionMode::None, SelectionMode::Random, SelectionMode::Correlation],
            fe_methods: Method::ALL.to_vec(),
            pipelines: Pipeline::ALL.to_vec(),
            classifiers: ClassifierKind::ALL.into_iter().map(ClassifierSpec::default_for).collect(),
            seeds: vec![0],
            master_seed: 0,
            fractions: [0.7, 0.15, 0.15],
            iterations: DEFAULT_ITERATIONS,
            extractor: ExtractorParams::default(),
            center_mode: CenterMode::default(),
            radius_scale: RadiusScale::default(),
            sphere_filter: SphereFilter::default(),
            jobs: 0,
            history_dir: None,
        }
    }

    /// Number of result records the grid produces. The raw pipeline does not
    /// depend on selection or extraction, so it contributes one cell per
    /// (dataset, seed, classifier).
    pub fn cell_count(&self) -> usize {
        let per = self
            .pipelines
            .iter()
            .map(|p| match p {
                Pipeline::Raw => 1,
                _ => self.fs_modes.len() * self.fe_methods.len(),
            })
            .sum::<usize>();
        self.datasets.len() * per * self.classifiers.len() * self.seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config { line: 0, message: m.to_string() });
        if self.datasets.is_empty() {
            return bad("no [dataset] section");
        }
        if self.fs_modes.is_empty() || self.fe_methods.is_empty() || self.pipelines.is_empty() {
            return bad("fs_modes, fe_methods and pipelines must be non-empty");
        }
        if self.classifiers.is_empty() || self.seeds.is_empty() {
            return bad("classifiers and seeds must be non-empty");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        Ok(())
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| err(line, format!("bad value {v:?} for `{key}`: {e}")))
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(line, key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(err(line, format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("bad value {v:?} for `{key}` (allowed: true, false)"))),
    }
}

fn unknown(line: usize, key: &str, section: &str, allowed: &[&str]) -> Error {
    err(
        line,
        format!("unknown key `{key}` in [{section}] (allowed: {})", allowed.join(", ")),
    )
}

const GRID_KEYS: &[&str] = &[
    "seed", "seeds", "splits", "fs_modes", "fe_methods", "pipelines", "classifiers", "jobs", "history_dir",
];
const HIERARCHY_KEYS: &[&str] = &["iterations", "center_mode", "radius_scale", "sphere_filter"];
const DATASET_KEYS: &[&str] = &["path", "label", "header"];
const EXTRACTION_KEYS: &[&str] = &[
    "eps", "diag_boost", "gda_kernel", "gda_bandwidth", "gda_reg", "rica_lambda", "rica_max_iters",
    "rica_smooth_eps",
];

#[derive(Default)]
struct PendingDataset {
    line: usize,
    name: String,
    path: Option<(usize, String)>,
    label: Option<String>,
    header: bool,
}

fn parse_center_mode(line: usize, v: &str) -> Result<CenterMode> {
    match v.trim().to_ascii_lowercase().as_str() {
        "bounding_box" => Ok(CenterMode::BoundingBox),
        "data_points" => Ok(CenterMode::DataPoints),
        _ => Err(err(line, format!("bad center_mode {v:?} (allowed: bounding_box, data_points)"))),
    }
}

fn parse_radius_scale(line: usize, v: &str) -> Result<RadiusScale> {
    match v.trim().to_ascii_lowercase().as_str() {
        "sigma" => Ok(RadiusScale::Sigma),
        "sigma_sqrt_d" => Ok(RadiusScale::SigmaSqrtD),
        _ => Err(err(line, format!("bad radius_scale {v:?} (allowed: sigma, sigma_sqrt_d)"))),
    }
}

/// Parses config text; `base` is the directory relative dataset paths use.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentGrid> {
    let mut grid = ExperimentGrid::new(Vec::new());
    let mut kinds: Option<(usize, Vec<ClassifierKind>)> = None;
    let mut knn_k = 5usize;
    let mut lda_reg = 1e-6;
    let (mut qda_shrink, mut qda_reg) = (0.1, 1e-6);
    let mut forest = ForestParams::default();
    let mut gda_bandwidth: Option<f64> = None;
    let mut gda_linear = false;
    let mut pending: Vec<PendingDataset> = Vec::new();
    let mut section = String::from("grid");

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(h) = content.strip_prefix('[') {
            let h = h
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section header is missing `]`"))?
                .trim();
            let mut parts = h.split_whitespace();
            let kind = parts.next().unwrap_or("");
            match kind {
                "dataset" => {
                    let name = parts
                        .next()
                        .ok_or_else(|| err(line, "dataset section needs a name: [dataset <name>]"))?;
                    if pending.iter().any(|d| d.name == name) {
                        return Err(err(line, format!("dataset {name:?} defined twice")));
                    }
                    pending.push(PendingDataset {
                        line,
                        name: name.to_string(),
                        header: true,
                        ..Default::default()
                    });
                }
                "grid" | "hierarchy" | "extraction" | "knn" | "lda" | "qda" | "rf" => {}
                other => {
                    return Err(err(
                        line,
                        format!(
                            "unknown section [{other}] (allowed: grid, hierarchy, extraction, dataset <name>, knn, lda, qda, rf)"
                        ),
                    ))
                }
            }
            if parts.next().is_some() && kind != "dataset" {
                return Err(err(line, format!("section [{kind}] takes no name")));
            }
            section = kind.to_string();
            continue;
        }
        let (key, v) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found {content:?}")))?;
        let key = key.trim();
        let v = v.trim();
        match section.as_str() {
            "grid" => match key {
                "seed" => grid.master_seed = value(line, key, v)?,
                "seeds" => grid.seeds = list(line, key, v)?,
                "splits" => {
                    let f: Vec<f64> = list(line, key, v)?;
                    if f.len() != 3 || f.iter().any(|x| !(*x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(err(line, "splits needs three positive fractions summing to 1"));
                    }
                    grid.fractions = [f[0], f[1], f[2]];
                }
                "fs_modes" => grid.fs_modes = list(line, key, v)?,
                "fe_methods" => grid.fe_methods = list(line, key, v)?,
                "pipelines" => grid.pipelines = list(line, key, v)?,
                "classifiers" => kinds = Some((line, list(line, key, v)?)),
                "jobs" => grid.jobs = value(line, key, v)?,
                "history_dir" => grid.history_dir = Some(base.join(v)),
                _ => return Err(unknown(line, key, "grid", GRID_KEYS)),
            },
            "hierarchy" => match key {
                "iterations" => {
                    grid.iterations = value(line, key, v)?;
                    if grid.iterations < 1 {
                        return Err(err(line, "iterations must be at least 1"));
                    }
                }
                "center_mode" => grid.center_mode = parse_center_mode(line, v)?,
                "radius_scale" => grid.radius_scale = parse_radius_scale(line, v)?,
                "sphere_filter" => {
                    grid.sphere_filter = match v.to_ascii_lowercase().as_str() {
                        "non_empty" => SphereFilter::NonEmpty,
                        "mixed" => SphereFilter::Mixed,
                        _ => return Err(err(line, format!("bad sphere_filter {v:?} (allowed: non_empty, mixed)"))),
                    }
                }
                _ => return Err(unknown(line, key, "hierarchy", HIERARCHY_KEYS)),
            },
            "dataset" => {
                let d = pending.last_mut().expect("dataset section open");
                match key {
                    "path" => d.path = Some((line, v.to_string())),
                    "label" => d.label = Some(v.to_string()),
                    "header" => d.header = flag(line, key, v)?,
                    _ => return Err(unknown(line, key, "dataset", DATASET_KEYS)),
                }
            }
            "extraction" => {
                let e = &mut grid.extractor;
                match key {
                    "eps" => e.eps = value(line, key, v)?,
                    "diag_boost" => e.diag_boost = value(line, key, v)?,
                    "gda_kernel" => match v.to_ascii_lowercase().as_str() {
                        "rbf" => gda_linear = false,
                        "linear" => gda_linear = true,
                        _ => return Err(err(line, format!("bad gda_kernel {v:?} (allowed: rbf, linear)"))),
                    },
                    "gda_bandwidth" => {
                        gda_bandwidth = if v.eq_ignore_ascii_case("auto") {
                            None
                        } else {
                            let b: f64 = value(line, key, v)?;
                            if !(b > 0.0) {
                                return Err(err(line, "gda_bandwidth must be positive or `auto`"));
                            }
                            Some(b)
                        }
                    }
                    "gda_reg" => e.gda_reg = value(line, key, v)?,
                    "rica_lambda" => e.rica_lambda = value(line, key, v)?,
                    "rica_max_iters" => e.rica_max_iters = value(line, key, v)?,
                    "rica_smooth_eps" => e.rica_smooth_eps = value(line, key, v)?,
                    _ => return Err(unknown(line, key, "extraction", EXTRACTION_KEYS)),
                }
            }
            "knn" => match key {
                "k" => {
                    knn_k = value(line, key, v)?;
                    if knn_k < 1 {
                        return Err(err(line, "k must be at least 1"));
                    }
                }
                _ => return Err(unknown(line, key, "knn", &["k"])),
            },
            "lda" => match key {
                "reg" => lda_reg = value(line, key, v)?,
                _ => return Err(unknown(line, key, "lda", &["reg"])),
            },
            "qda" => match key {
                "shrink" => {
                    qda_shrink = value(line, key, v)?;
                    if !(0.0..=1.0).contains(&qda_shrink) {
                        return Err(err(line, "shrink must be in [0, 1]"));
                    }
                }
                "reg" => qda_reg = value(line, key, v)?,
                _ => return Err(unknown(line, key, "qda", &["shrink", "reg"])),
            },
            "rf" => match key {
                "trees" => forest.n_trees = value(line, key, v)?,
                "max_depth" => {
                    forest.max_depth = if v.eq_ignore_ascii_case("none") {
                        None
                    } else {
                        Some(value(line, key, v)?)
                    }
                }
                "min_leaf" => forest.min_leaf = value(line, key, v)?,
                _ => return Err(unknown(line, key, "rf", &["trees", "max_depth", "min_leaf"])),
            },
            _ => unreachable!("section validated at its header"),
        }
    }

    grid.extractor.gda_kernel = if gda_linear {
        Kernel::Linear
    } else {
        Kernel::Rbf { bandwidth: gda_bandwidth }
    };
    if forest.n_trees < 1 || forest.min_leaf < 1 {
        return Err(err(0, "[rf] trees and min_leaf must be at least 1"));
    }
    let (kind_line, kinds) = kinds.unwrap_or((0, ClassifierKind::ALL.to_vec()));
    if kinds.iter().collect::<BTreeSet<_>>().len() != kinds.len() {
        return Err(err(kind_line, "classifiers must be distinct"));
    }
    grid.classifiers = kinds
        .into_iter()
        .map(|k| match k {
            ClassifierKind::Knn => ClassifierSpec::Knn { k: knn_k },
            ClassifierKind::Lda => ClassifierSpec::Lda { reg: lda_reg },
            ClassifierKind::Qda => ClassifierSpec::Qda {
                shrink: qda_shrink,
                reg: qda_reg,
            },
            ClassifierKind::RandomForest => ClassifierSpec::RandomForest(forest.clone()),
        })
        .collect();

    for d in pending {
        let (pline, p) = d
            .path
            .ok_or_else(|| err(d.line, format!("dataset {:?} has no `path`", d.name)))?;
        let path = base.join(&p);
        if !path.is_file() {
            return Err(err(pline, format!("dataset file {} does not exist", path.display())));
        }
        let label = d.label.unwrap_or_else(|| "class".to_string());
        grid.datasets.push(DatasetSpec {
            name: d.name,
            path,
            label: label.parse().expect("infallible"),
            has_header: d.header,
        });
    }
    grid.validate()?;
    Ok(grid)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
