//! CSV ingestion, standardization and stratified splitting.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng;

const SPLIT_STREAM: u64 = 0x5011_7000;

/// Instances by features, with dense integer labels `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Validates the full-dataset invariants: at least two classes and every
    /// class observed.
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self::partial(x, y, feature_names, class_names)?;
        if ds.class_count() < 2 {
            return Err(Error::degenerate(format!(
                "need at least 2 classes, found {}",
                ds.class_count()
            )));
        }
        let counts = ds.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::degenerate(format!(
                "class {c} ({}) has no instances",
                ds.class_names[c]
            )));
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but allows classes with no instances, which
    /// happens for small validation/test partitions.
    fn partial(
        x: Matrix,
        y: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.cols()
            )));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::shape(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            class_names,
        })
    }

    /// Dataset with generated feature and class names.
    pub fn from_parts(x: Matrix, y: Vec<usize>) -> Result<Self> {
        let k = y.iter().max().map_or(0, |m| m + 1);
        let feature_names = (0..x.cols()).map(|j| format!("f{j}")).collect();
        let class_names = (0..k).map(|c| c.to_string()).collect();
        Self::new(x, y, feature_names, class_names)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    /// Rows at `idx`, keeping the class vocabulary.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels and names with a replaced value matrix (e.g. after a
    /// projection). Feature names are regenerated when the width changes.
    pub fn with_values(&self, x: Matrix) -> Result<Dataset> {
        let feature_names = if x.cols() == self.d() {
            self.feature_names.clone()
        } else {
            (0..x.cols()).map(|j| format!("z{j}")).collect()
        };
        Self::partial(x, self.y.clone(), feature_names, self.class_names.clone())
    }
}

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        })
    }
}

/// Loads a comma-delimited file. Labels are re-encoded to `0..K` in order of
/// first appearance; row order is preserved.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_csv(file, label, has_header)
}

pub fn read_csv<R: std::io::Read>(reader: R, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let mut header: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            Some(r) => header = Some(r?.iter().map(str::to_string).collect()),
            None => return Err(Error::Schema("file is empty".into())),
        }
    }

    let label_idx: usize = match (label, &header) {
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(h)) => h
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("no column named {name:?}")))?,
        (LabelColumn::Name(name), None) => {
            return Err(Error::Schema(format!(
                "label column {name:?} given by name but the file has no header"
            )))
        }
    };
    let width = header.as_ref().map(Vec::len);
    if let Some(w) = width {
        if label_idx >= w {
            return Err(Error::Schema(format!(
                "label column {label_idx} beyond {w} columns"
            )));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut cols: Option<usize> = width;
    let row_offset = usize::from(has_header);

    for (r, rec) in records.enumerate() {
        let rec = rec?;
        let row = r + row_offset;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let w = *cols.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row,
                column: rec.len().min(w),
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let li = label_idx;
        if li >= w {
            return Err(Error::Schema(format!("label column {li} beyond {w} columns")));
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == li {
                let next = codes.len();
                let code = *codes.entry(cell.to_string()).or_insert_with(|| {
                    class_names.push(cell.to_string());
                    next
                });
                labels.push(code);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: c,
                    message: if cell.is_empty() {
                        "missing value".to_string()
                    } else {
                        format!("cannot parse {cell:?} as a number")
                    },
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: c,
                        message: format!("non-finite value {cell:?}"),
                    });
                }
                values.push(v);
            }
        }
    }

    let w = cols.ok_or_else(|| Error::Schema("file has no data rows".into()))?;
    let li = label_idx;
    let d = w - 1;
    let feature_names = match header {
        Some(h) => h
            .into_iter()
            .enumerate()
            .filter(|(c, _)| *c != li)
            .map(|(_, s)| s)
            .collect(),
        None => (0..w).filter(|&c| c != li).map(|c| format!("col{c}")).collect(),
    };
    let n = labels.len();
    let x = Matrix::new(n, d, values)?;
    Dataset::new(x, labels, feature_names, class_names)
}

/// Writes features then a final `label` column, reals at 17 significant digits.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path.as_ref())?);
    let mut header = ds.feature_names.join(",");
    header.push_str(",label");
    writeln!(f, "{header}")?;
    for (r, &c) in ds.x.row_iter().zip(&ds.y) {
        for v in r {
            write!(f, "{v:.16e},")?;
        }
        writeln!(f, "{}", ds.class_names[c])?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationParams {
    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    /// Maps `x` into standardized units; constant features become zero.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(format!(
                "standardization fitted on {} features, data has {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }
}

fn column_stds(x: &Matrix, means: &[f64]) -> Vec<f64> {
    let n = x.rows();
    let mut ss = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for ((s, v), m) in ss.iter_mut().zip(r).zip(means) {
            *s += (v - m) * (v - m);
        }
    }
    ss.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect()
}

/// Z-scores every feature with the sample standard deviation.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    if ds.n() < 2 {
        return Err(Error::degenerate("standardize needs at least 2 instances"));
    }
    let mean = ds.x.column_means();
    let std = column_stds(&ds.x, &mean);
    let params = StandardizationParams { mean, std };
    let x = params.apply(&ds.x)?;
    Ok((ds.with_values(x)?, params))
}

/// Mean of the per-feature sample standard deviations, skipping constant
/// features; `0.0` when every feature is constant.
pub fn avg_feature_std(x: &Matrix) -> Result<f64> {
    if x.rows() < 2 {
        return Err(Error::degenerate("feature std needs at least 2 instances"));
    }
    let stds = column_stds(x, &x.column_means());
    let live: Vec<f64> = stds.into_iter().filter(|s| *s > 0.0).collect();
    if live.is_empty() {
        return Ok(0.0);
    }
    Ok(live.iter().sum::<f64>() / live.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub train_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub split_seed: u64,
}

/// Largest-remainder apportionment of `size` items over `fractions`; equal
/// remainders favour the later partition.
fn apportion(size: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * size as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(b.cmp(&a))
    });
    for &p in order.iter().take(size.saturating_sub(assigned)) {
        counts[p] += 1;
    }
    counts
}

/// Per-class shuffled split into train/validation/test.
pub fn split_stratified(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<SplitDataset> {
    if fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::param(format!("split fractions must be positive: {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &c) in ds.y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < 3 {
            return Err(Error::Stratification(format!(
                "class {} has {} instances, fewer than the 3 partitions",
                ds.class_names[c],
                members.len()
            )));
        }
        let mut r = rng::derive(seed, SPLIT_STREAM, c as u64);
        members.shuffle(&mut r);
        let counts = apportion(members.len(), &fractions);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train_idx, validation_idx, test_idx] = parts;
    Ok(SplitDataset {
        train: ds.subset(&train_idx),
        validation: ds.subset(&validation_idx),
        test: ds.subset(&test_idx),
        train_idx,
        validation_idx,
        test_idx,
        split_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> Dataset {
        read_csv("a,b,label\n1,2,x\n3,4,y\n5,6,x".as_bytes(), &LabelColumn::Name("label".into()), true).unwrap()
    }

    #[test]
    fn loads_three_row_file() {
        let ds = tiny();
        assert_eq!((ds.n(), ds.d(), ds.class_count()), (3, 2, 2));
        assert_eq!(ds.y, vec![0, 1, 0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.x.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn label_by_index_without_header() {
        let ds = read_csv("x,1,2\ny,3,4\n".as_bytes(), &LabelColumn::Index(0), false).unwrap();
        assert_eq!(ds.y, vec![0, 1]);
        assert_eq!(ds.x.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn parse_error_locates_cell() {
        let err = read_csv("a,b,label\n1,2,x\n3,oops,y\n".as_bytes(), &LabelColumn::Index(2), true)
            .unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 1)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        let err = read_csv("a,b,label\n1,,x\n3,4,y\n".as_bytes(), &LabelColumn::Index(2), true).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 1, .. }));
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let err = read_csv("a,b\n1,2\n".as_bytes(), &LabelColumn::Name("label".into()), true).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = read_csv("1,2\n".as_bytes(), &LabelColumn::Index(5), false).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn single_class_is_degenerate() {
        let err = read_csv("a,label\n1,x\n2,x\n".as_bytes(), &LabelColumn::Index(1), true).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }

    #[test]
    fn standardize_basic_and_constant() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let ds = Dataset::from_parts(x, vec![0, 1, 0]).unwrap();
        let (s, p) = standardize(&ds).unwrap();
        assert_eq!(s.x.col(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.x.col(1), vec![0.0, 0.0, 0.0]);
        assert!(p.is_constant(1) && !p.is_constant(0));
        assert_eq!(p.apply(&ds.x).unwrap(), s.x);
    }

    #[test]
    fn avg_std_examples() {
        // column stds 1 and 3
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 3.0], [2.0, 6.0]]).unwrap();
        assert!((avg_feature_std(&x).unwrap() - 2.0).abs() < 1e-15);
        let c = Matrix::from_rows(&[[4.0], [4.0]]).unwrap();
        assert_eq!(avg_feature_std(&c).unwrap(), 0.0);
    }

    #[test]
    fn avg_std_matches_column_oracle() {
        let mut r = rng::seeded(4);
        use rand::Rng;
        let data: Vec<f64> = (0..30).map(|_| r.gen_range(-3.0..3.0)).collect();
        let x = Matrix::new(10, 3, data).unwrap();
        let mut oracle = 0.0;
        for j in 0..3 {
            let col = x.col(j);
            let m = col.iter().sum::<f64>() / 10.0;
            oracle += (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9.0).sqrt() / 3.0;
        }
        assert!((avg_feature_std(&x).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn split_exact_divisibility() {
        let x = Matrix::new(8, 1, (0..8).map(f64::from).collect()).unwrap();
        let ds = Dataset::from_parts(x, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let s = split_stratified(&ds, [0.5, 0.25, 0.25], 1).unwrap();
        assert_eq!(s.train.class_counts(), vec![2, 2]);
        assert_eq!(s.validation.class_counts(), vec![1, 1]);
        assert_eq!(s.test.class_counts(), vec![1, 1]);
    }

    #[test]
    fn split_rejects_tiny_class_and_bad_fractions() {
        let x = Matrix::new(5, 1, vec![0.0; 5]).unwrap();
        let ds = Dataset::from_parts(x, vec![0, 0, 0, 1, 1]).unwrap();
        assert!(matches!(
            split_stratified(&ds, [0.6, 0.2, 0.2], 0),
            Err(Error::Stratification(_))
        ));
        assert!(split_stratified(&ds, [0.6, 0.3, 0.2], 0).is_err());
    }

    #[test]
    fn apportion_rounding() {
        assert_eq!(apportion(50, &[0.7, 0.15, 0.15]), [35, 7, 8]);
        assert_eq!(apportion(4, &[0.5, 0.25, 0.25]), [2, 1, 1]);
        assert_eq!(apportion(3, &[0.7, 0.15, 0.15]), [2, 0, 1]);
    }

    proptest! {
        #[test]
        fn split_partitions_indices(
            sizes in proptest::collection::vec(3usize..30, 2..5),
            seed in any::<u64>(),
            a in 0.2f64..0.8,
        ) {
            let b = (1.0 - a) / 2.0;
            let fr = [a, b, 1.0 - a - b];
            let y: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
            let n = y.len();
            let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
            let ds = Dataset::from_parts(x, y).unwrap();
            let s = split_stratified(&ds, fr, seed).unwrap();
            let mut all: Vec<usize> = s.train_idx.iter().chain(&s.validation_idx).chain(&s.test_idx).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (c, &size) in sizes.iter().enumerate() {
                for (part, f) in [&s.train, &s.validation, &s.test].iter().zip(fr) {
                    let got = part.class_counts()[c] as f64;
                    prop_assert!((got - f * size as f64).abs() < 1.0);
                }
            }
            prop_assert_eq!(s.clone(), split_stratified(&ds, fr, seed).unwrap());
        }

        #[test]
        fn standardized_avg_std_is_one(data in proptest::collection::vec(-100.0f64..100.0, 12)) {
            let x = Matrix::new(4, 3, data).unwrap();
            let ds = Dataset::from_parts(x, vec![0, 1, 0, 1]).unwrap();
            let (s, _) = standardize(&ds).unwrap();
            let v = avg_feature_std(&s.x).unwrap();
            prop_assert!(v == 0.0 || (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut r = rng::seeded(9);
        use rand::Rng;
        let data: Vec<f64> = (0..40).map(|_| r.gen::<f64>() * 1e3 - 500.0).collect();
        let x = Matrix::new(10, 4, data).unwrap();
        let y = (0..10).map(|i| i % 3).collect();
        let ds = Dataset::new(
            x,
            y,
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec!["p".into(), "q".into(), "r".into()],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&ds, &path).unwrap();
        let back = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(back, ds);
    }
}
