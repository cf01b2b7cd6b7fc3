//! Plain-text storage for projection models and histories.
//!
//! Numbers are written with 17 significant digits, which parse back to the
//! identical `f64`. The reader is whitespace-tokenized, so line breaks only
//! serve readability.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feature_extraction::{KernelData, KernelKind, Method, ProjectionModel};
use crate::hierarchy::ProjectionHistory;
use crate::numerics::Matrix;
use crate::sampling::ScheduleState;

const MAGIC: &str = "projection-history";
const VERSION: u32 = 1;

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn vector(out: &mut String, tag: &str, v: &[f64]) {
    let _ = write!(out, "{tag} {}\n", v.len());
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        num(out, *x);
    }
    out.push('\n');
}

fn matrix(out: &mut String, tag: &str, m: &Matrix) {
    let _ = writeln!(out, "{tag} {} {}", m.rows(), m.cols());
    for r in m.row_iter() {
        for (j, x) in r.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            num(out, *x);
        }
        out.push('\n');
    }
}

pub fn model_to_string(m: &ProjectionModel) -> String {
    let mut out = String::new();
    write_model(&mut out, m);
    out
}

fn write_model(out: &mut String, m: &ProjectionModel) {
    let _ = writeln!(out, "model {}", m.method.name());
    let _ = writeln!(out, "input_dim {}", m.input_dim);
    let _ = writeln!(out, "requested_dim {}", m.requested_dim);
    let _ = writeln!(out, "out_dim {}", m.out_dim);
    let idx: Vec<String> = m.selected_features.iter().map(|i| i.to_string()).collect();
    let _ = writeln!(out, "selected {}\n{}", idx.len(), idx.join(" "));
    vector(out, "mean_in", &m.mean_in);
    matrix(out, "weights", &m.weights);
    match &m.kernel {
        None => out.push_str("kernel none\n"),
        Some(k) => {
            match k.kind {
                KernelKind::Linear => out.push_str("kernel linear\n"),
                KernelKind::Rbf(s) => {
                    out.push_str("kernel rbf ");
                    num(out, s);
                    out.push('\n');
                }
            }
            matrix(out, "points", &k.points);
            matrix(out, "dual", &k.dual);
            vector(out, "col_means", &k.col_means);
            out.push_str("grand_mean ");
            num(out, k.grand_mean);
            out.push('\n');
        }
    }
    out.push_str("end_model\n");
}

fn write_schedule(out: &mut String, s: &ScheduleState) {
    let _ = write!(out, "schedule tau {} total {} radius ", s.tau, s.total);
    num(out, s.radius);
    out.push_str(" delta_r ");
    num(out, s.delta_r);
    out.push_str(" sigma_bar ");
    num(out, s.sigma_bar);
    let _ = write!(out, " n_spheres {} p_tau ", s.n_spheres);
    num(out, s.p_tau);
    let _ = writeln!(out, " n_features {} fe_dim {}", s.n_features, s.fe_dim);
}

pub fn history_to_string(h: &ProjectionHistory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "iterations {}", h.models.len());
    for (i, (m, s)) in h.models.iter().zip(&h.schedule_log).enumerate() {
        let _ = writeln!(out, "iteration {}", i + 1);
        write_schedule(&mut out, s);
        write_model(&mut out, m);
    }
    out
}

pub fn save_history(h: &ProjectionHistory, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, history_to_string(h))?;
    Ok(())
}

pub fn load_history(path: impl AsRef<Path>) -> Result<ProjectionHistory> {
    parse_history(&std::fs::read_to_string(path)?)
}

struct Tokens<'a> {
    it: std::str::SplitWhitespace<'a>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            it: s.split_whitespace(),
            pos: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.pos += 1;
        self.it
            .next()
            .ok_or_else(|| Error::Format(format!("unexpected end of input at token {}", self.pos)))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next()?;
        if t != word {
            return Err(Error::Format(format!("token {}: expected {word:?}, found {t:?}", self.pos)));
        }
        Ok(())
    }

    fn parse<T: FromStr>(&mut self) -> Result<T> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| Error::Format(format!("token {}: cannot parse {t:?}", self.pos)))
    }

    fn field<T: FromStr>(&mut self, word: &str) -> Result<T> {
        self.expect(word)?;
        self.parse()
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.parse()).collect()
    }

    fn vector(&mut self, tag: &str) -> Result<Vec<f64>> {
        let n = self.field(tag)?;
        self.floats(n)
    }

    fn matrix(&mut self, tag: &str) -> Result<Matrix> {
        let r: usize = self.field(tag)?;
        let c: usize = self.parse()?;
        let data = self.floats(r * c)?;
        Matrix::new(r, c, data).map_err(|e| Error::Format(format!("{tag}: {e}")))
    }
}

fn read_model(t: &mut Tokens) -> Result<ProjectionModel> {
    let tag = t.field::<String>("model")?;
    let method: Method = tag.parse().map_err(Error::Format)?;
    let input_dim = t.field("input_dim")?;
    let requested_dim = t.field("requested_dim")?;
    let out_dim = t.field("out_dim")?;
    let n_sel: usize = t.field("selected")?;
    let selected_features = (0..n_sel).map(|_| t.parse()).collect::<Result<Vec<usize>>>()?;
    let mean_in = t.vector("mean_in")?;
    let weights = t.matrix("weights")?;
    t.expect("kernel")?;
    let kernel = match t.next()? {
        "none" => None,
        kind => {
            let kind = match kind {
                "linear" => KernelKind::Linear,
                "rbf" => KernelKind::Rbf(t.parse()?),
                other => return Err(Error::Format(format!("unknown kernel {other:?}"))),
            };
            let points = t.matrix("points")?;
            let dual = t.matrix("dual")?;
            let col_means = t.vector("col_means")?;
            let grand_mean = t.field("grand_mean")?;
            Some(KernelData {
                kind,
                points,
                dual,
                col_means,
                grand_mean,
            })
        }
    };
    t.expect("end_model")?;
    Ok(ProjectionModel {
        method,
        input_dim,
        selected_features,
        mean_in,
        weights,
        kernel,
        out_dim,
        requested_dim,
    })
}

pub fn parse_model(s: &str) -> Result<ProjectionModel> {
    read_model(&mut Tokens::new(s))
}

fn read_schedule(t: &mut Tokens) -> Result<ScheduleState> {
    t.expect("schedule")?;
    Ok(ScheduleState {
        tau: t.field("tau")?,
        total: t.field("total")?,
        radius: t.field("radius")?,
        delta_r: t.field("delta_r")?,
        sigma_bar: t.field("sigma_bar")?,
        n_spheres: t.field("n_spheres")?,
        p_tau: t.field("p_tau")?,
        n_features: t.field("n_features")?,
        fe_dim: t.field("fe_dim")?,
    })
}

pub fn parse_history(s: &str) -> Result<ProjectionHistory> {
    let mut t = Tokens::new(s);
    let version: u32 = t.field(MAGIC)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported history version {version}")));
    }
    let n: usize = t.field("iterations")?;
    let mut h = ProjectionHistory::default();
    for i in 1..=n {
        let idx: usize = t.field("iteration")?;
        if idx != i {
            return Err(Error::Format(format!("expected iteration {i}, found {idx}")));
        }
        h.schedule_log.push(read_schedule(&mut t)?);
        let m = read_model(&mut t)?;
        h.feature_trace.push(m.selected_features.clone());
        h.models.push(m);
    }
    if let Ok(extra) = t.next() {
        return Err(Error::Format(format!("trailing content starting at {extra:?}")));
    }
    h.check_chain()?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{standardize, Dataset};
    use crate::feature_extraction::Method;
    use crate::feature_selection::SelectionMode;
    use crate::hierarchy::{run_hierarchical, run_original, Pipeline, PipelineConfig};
    use crate::rng::seeded;
    use rand::Rng as _;

    fn data(seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let y: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let v: Vec<f64> = y
            .iter()
            .flat_map(|&c| (0..5).map(|j| if j == c { 1.5 } else { 0.0 } + rng.gen::<f64>()).collect::<Vec<_>>())
            .collect();
        standardize(&Dataset::from_parts(Matrix::new(90, 5, v).unwrap(), y).unwrap()).unwrap().0
    }

    #[test]
    fn history_round_trip_is_exact() {
        let ds = data(1);
        for method in Method::ALL {
            let mut cfg = PipelineConfig::new(SelectionMode::Correlation, method, Pipeline::Hierarchical);
            cfg.extractor.rica_max_iters = 20;
            cfg.seed = 4;
            let (h, _) = run_hierarchical(&ds, &cfg).unwrap();
            let text = history_to_string(&h);
            let back = parse_history(&text).unwrap();
            assert_eq!(back, h, "{method}");
            assert_eq!(history_to_string(&back), text);
        }
    }

    #[test]
    fn model_round_trip_and_file_io() {
        let ds = data(2);
        let cfg = PipelineConfig::new(SelectionMode::None, Method::Gda, Pipeline::Original);
        let (h, _) = run_original(&ds, &cfg).unwrap();
        let m = &h.models[0];
        assert_eq!(&parse_model(&model_to_string(m)).unwrap(), m);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.txt");
        save_history(&h, &p).unwrap();
        assert_eq!(load_history(&p).unwrap(), h);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(parse_history("").is_err());
        assert!(parse_history("projection-history 2\niterations 0\n").is_err());
        assert!(parse_history("projection-history 1\niterations 0\nextra").is_err());
        assert_eq!(parse_history("projection-history 1\niterations 0\n").unwrap(), ProjectionHistory::default());
        let ds = data(3);
        let cfg = PipelineConfig::new(SelectionMode::None, Method::Pca, Pipeline::Original);
        let text = history_to_string(&run_original(&ds, &cfg).unwrap().0);
        let cut = &text[..text.len() / 2];
        assert!(parse_history(cut).is_err());
        assert!(parse_history(&text.replace("model PCA", "model XYZ")).is_err());
    }
}
