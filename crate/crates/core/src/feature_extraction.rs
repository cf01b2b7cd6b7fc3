//! The four subspace learners and the fitted [`ProjectionModel`].
//!
//! * PCA: leading eigenvectors of the sample covariance.
//! * FDA: leading generalized eigenvectors of `(S_b, S_w)`, maximizing the
//!   Rayleigh quotient `uᵀS_b u / uᵀS_w u`. `S_w` is regularized before the
//!   solve and the diagonal of the resulting weight matrix gets a small boost.
//! * GDA: the same criterion in an RBF (or linear) kernel feature space,
//!   solved in the dual.
//! * RICA: reconstruction ICA, gradient descent on
//!   `(1/n)Σ‖WᵀW x − x‖² + (λ/n)ΣΣ sqrt((W x)_j² + ε)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::{
    covariance, dot, generalized_eigen, squared_distance, symmetric_eigen, Matrix, DEFAULT_EPS,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    Fda,
    Gda,
    Rica,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pca, Method::Fda, Method::Gda, Method::Rica];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "PCA",
            Method::Fda => "FDA",
            Method::Gda => "GDA",
            Method::Rica => "RICA",
        }
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, Method::Fda | Method::Gda)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        // LDA is the same extractor as FDA
        if t.eq_ignore_ascii_case("lda") {
            return Ok(Method::Fda);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown feature extraction method {s:?} (allowed: PCA, FDA, GDA, RICA)"))
    }
}

/// Kernel used by GDA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(−‖a−b‖²/(2σ²))`; `None` picks σ as the median pairwise distance.
    Rbf { bandwidth: Option<f64> },
    Linear,
}

impl Kernel {
    fn resolve(self, x: &Matrix) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { bandwidth: Some(b) } => KernelKind::Rbf(b),
            Kernel::Rbf { bandwidth: None } => KernelKind::Rbf(median_distance(x)),
        }
    }
}

/// A kernel with its bandwidth fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Rbf(f64),
    Linear,
}

impl KernelKind {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelKind::Rbf(s) => (-squared_distance(a, b) / (2.0 * s * s)).exp(),
            KernelKind::Linear => dot(a, b),
        }
    }
}

fn median_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(squared_distance(x.row(i), x.row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med > 0.0 {
        return med;
    }
    // more than half the pairs coincide; fall back to the mean positive distance
    let pos: Vec<f64> = dists.into_iter().filter(|d| *d > 0.0).collect();
    if pos.is_empty() {
        1.0
    } else {
        pos.iter().sum::<f64>() / pos.len() as f64
    }
}

/// Hyperparameters shared by all extractors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    /// Relative regularization of `S_w` before the FDA solve.
    pub eps: f64,
    /// Added to `W[i,i]` after the FDA solve.
    pub diag_boost: f64,
    pub gda_kernel: Kernel,
    /// Relative ridge on the dual within-class term.
    pub gda_reg: f64,
    pub rica_lambda: f64,
    pub rica_max_iters: usize,
    pub rica_smooth_eps: f64,
}

impl Default for ExtractorParams {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            diag_boost: 1e-6,
            gda_kernel: Kernel::Rbf { bandwidth: None },
            gda_reg: 1e-6,
            rica_lambda: 0.5,
            rica_max_iters: 500,
            rica_smooth_eps: 1e-8,
        }
    }
}

/// Dual representation retained by a GDA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelData {
    pub kind: KernelKind,
    /// Training points after selection and centering.
    pub points: Matrix,
    /// `n × z` expansion coefficients.
    pub dual: Matrix,
    /// Column means of the uncentered training kernel matrix.
    pub col_means: Vec<f64>,
    pub grand_mean: f64,
}

/// One fitted extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub method: Method,
    /// Width of the space this model accepts.
    pub input_dim: usize,
    /// Columns of the input space used by the model, ascending.
    pub selected_features: Vec<usize>,
    pub mean_in: Vec<f64>,
    /// `d_sel × z` for linear methods; empty for GDA.
    pub weights: Matrix,
    pub kernel: Option<KernelData>,
    pub out_dim: usize,
    /// Dimension asked for before rank clamping.
    pub requested_dim: usize,
}

impl ProjectionModel {
    fn linear(method: Method, mean_in: Vec<f64>, weights: Matrix, requested_dim: usize) -> Self {
        let d = mean_in.len();
        Self {
            method,
            input_dim: d,
            selected_features: (0..d).collect(),
            out_dim: weights.cols(),
            mean_in,
            weights,
            kernel: None,
            requested_dim,
        }
    }

    /// Re-targets a model fitted on `features` of a wider `input_dim` space.
    pub fn with_selection(mut self, features: Vec<usize>, input_dim: usize) -> Result<Self> {
        if features.len() != self.mean_in.len() {
            return Err(Error::shape(format!(
                "{} selected features for a model fitted on {}",
                features.len(),
                self.mean_in.len()
            )));
        }
        if features.iter().any(|&f| f >= input_dim) || features.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::shape("selected features must be ascending and inside the input space"));
        }
        self.selected_features = features;
        self.input_dim = input_dim;
        Ok(self)
    }
}

/// Between-class (`between`) and within-class (`within`) scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub between: Matrix,
    pub within: Matrix,
}

fn class_members(y: &[usize]) -> Vec<Vec<usize>> {
    let k = y.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        members[c].push(i);
    }
    members.retain(|m| !m.is_empty());
    members
}

pub fn scatter_matrices(x: &Matrix, y: &[usize]) -> Result<ScatterPair> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    let classes = class_members(y);
    if classes.len() < 2 {
        return Err(Error::degenerate("scatter matrices need at least 2 classes"));
    }
    let d = x.cols();
    let mu = x.column_means();
    let mut between = Matrix::zeros(d, d);
    let mut within = Matrix::zeros(d, d);
    let mut dev = vec![0.0; d];
    for members in &classes {
        let xc = x.select_rows(members);
        let mc = xc.column_means();
        let nc = members.len() as f64;
        for (dv, (a, b)) in dev.iter_mut().zip(mc.iter().zip(&mu)) {
            *dv = a - b;
        }
        add_outer(&mut between, &dev, nc);
        for r in xc.row_iter() {
            for (dv, (a, b)) in dev.iter_mut().zip(r.iter().zip(&mc)) {
                *dv = a - b;
            }
            add_outer(&mut within, &dev, 1.0);
        }
    }
    Ok(ScatterPair { between, within })
}

fn add_outer(m: &mut Matrix, v: &[f64], w: f64) {
    for (a, va) in v.iter().enumerate() {
        if *va == 0.0 {
            continue;
        }
        let s = w * va;
        for (o, vb) in m.row_mut(a).iter_mut().zip(v) {
            *o += s * vb;
        }
    }
}

/// Fisher criterion `J(u) = uᵀS_b u / uᵀS_w u`.
pub fn fda_objective(u: &[f64], sp: &ScatterPair) -> Result<f64> {
    let num = dot(u, &sp.between.mat_vec(u)?);
    let den = dot(u, &sp.within.mat_vec(u)?);
    if den <= 1e-14 {
        return Err(Error::singular(format!(
            "direction has within-class scatter {den:e}"
        )));
    }
    Ok(num / den)
}

fn check_dim(z: usize, d: usize) -> Result<()> {
    if z < 1 || z > d {
        return Err(Error::param(format!("output dimension {z} outside 1..={d}")));
    }
    Ok(())
}

pub fn fit_pca(x: &Matrix, z: usize) -> Result<ProjectionModel> {
    check_dim(z, x.cols())?;
    let cov = covariance(x, true)?;
    let eig = symmetric_eigen(&cov)?;
    Ok(ProjectionModel::linear(
        Method::Pca,
        x.column_means(),
        eig.vectors.leading_cols(z),
        z,
    ))
}

/// FDA directions; the output dimension is clamped to `min(z, K−1, rank)`.
pub fn fit_fda(x: &Matrix, y: &[usize], z: usize, eps: f64, diag_boost: f64) -> Result<ProjectionModel> {
    if z < 1 {
        return Err(Error::param("output dimension must be at least 1"));
    }
    let sp = scatter_matrices(x, y)?;
    let k = class_members(y).len();
    let eig = generalized_eigen(&sp.between, &sp.within, eps)?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    let rank = eig
        .values
        .iter()
        .filter(|v| top > 0.0 && **v > 1e-10 * top)
        .count();
    let keep = z.min(k - 1).min(rank.max(1)).min(x.cols());
    let mut w = eig.vectors.leading_cols(keep);
    for i in 0..x.cols().min(keep) {
        w[(i, i)] += diag_boost;
    }
    Ok(ProjectionModel::linear(Method::Fda, x.column_means(), w, z))
}

/// Kernel discriminant analysis in the dual. The output dimension is clamped
/// to `min(z, K−1)`.
pub fn fit_gda(x: &Matrix, y: &[usize], z: usize, kernel: Kernel, reg: f64) -> Result<ProjectionModel> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if z < 1 {
        return Err(Error::param("output dimension must be at least 1"));
    }
    let classes = class_members(y);
    let n = x.rows();
    if classes.len() < 2 {
        return Err(Error::degenerate("GDA needs at least 2 classes"));
    }
    if n < classes.len() + 1 {
        return Err(Error::degenerate(format!(
            "GDA needs more than {} instances, got {n}",
            classes.len()
        )));
    }
    let mean_in = x.column_means();
    let points = x.center_with(&mean_in);
    let kind = kernel.resolve(&points);
    if let KernelKind::Rbf(s) = kind {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::param(format!("RBF bandwidth must be positive, got {s}")));
        }
    }

    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kind.eval(points.row(i), points.row(j));
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let col_means = gram.column_means();
    let grand_mean = col_means.iter().sum::<f64>() / n as f64;
    let mut kc = gram;
    for i in 0..n {
        for j in 0..n {
            kc[(i, j)] += grand_mean - col_means[i] - col_means[j];
        }
    }

    // Class means of the centered kernel columns.
    let overall = kc.column_means();
    let mut between = Matrix::zeros(n, n);
    let mut within = kc.matmul(&kc)?;
    let mut dev = vec![0.0; n];
    for members in &classes {
        let nc = members.len() as f64;
        let mut mc = vec![0.0; n];
        for &j in members {
            for (m, i) in mc.iter_mut().zip(0..n) {
                *m += kc[(i, j)];
            }
        }
        mc.iter_mut().for_each(|m| *m /= nc);
        add_outer(&mut within, &mc, -nc);
        for (dv, (a, b)) in dev.iter_mut().zip(mc.iter().zip(&overall)) {
            *dv = a - b;
        }
        add_outer(&mut between, &dev, nc);
    }
    symmetrize(&mut within);
    symmetrize(&mut between);

    let eig = generalized_eigen(&between, &within, reg)?;
    let keep = z.min(classes.len() - 1).min(n);
    let dual = eig.vectors.leading_cols(keep);
    Ok(ProjectionModel {
        method: Method::Gda,
        input_dim: x.cols(),
        selected_features: (0..x.cols()).collect(),
        mean_in,
        weights: Matrix::zeros(0, 0),
        kernel: Some(KernelData {
            kind,
            points,
            dual,
            col_means,
            grand_mean,
        }),
        out_dim: keep,
        requested_dim: z,
    })
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_rica(w: &Matrix, x: &Matrix, lambda: f64, smooth_eps: f64) -> Result<()> {
    if w.cols() != x.cols() {
        return Err(Error::shape(format!(
            "W has {} columns, data has {} features",
            w.cols(),
            x.cols()
        )));
    }
    if lambda < 0.0 || !(smooth_eps > 0.0) {
        return Err(Error::param("need lambda >= 0 and smooth_eps > 0"));
    }
    Ok(())
}

/// Activations `A = X·Wᵀ`, residual `R = A·W − X` and the objective value.
fn rica_forward(w: &Matrix, x: &Matrix, lambda: f64, smooth_eps: f64) -> Result<(f64, Matrix, Matrix)> {
    let n = x.rows() as f64;
    let act = x.matmul(&w.transpose())?;
    let resid = act.matmul(w)?.sub(x)?;
    let recon = resid.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    let penalty: f64 = act.as_slice().iter().map(|v| (v * v + smooth_eps).sqrt()).sum();
    Ok((recon + lambda * penalty / n, act, resid))
}

/// RICA objective alone.
pub fn rica_objective(w: &Matrix, x: &Matrix, lambda: f64, smooth_eps: f64) -> Result<f64> {
    check_rica(w, x, lambda, smooth_eps)?;
    Ok(rica_forward(w, x, lambda, smooth_eps)?.0)
}

/// RICA objective and its analytic gradient with respect to `w` (`z × d`),
/// for rows of `x` taken as instances.
pub fn rica_objective_and_grad(w: &Matrix, x: &Matrix, lambda: f64, smooth_eps: f64) -> Result<(f64, Matrix)> {
    check_rica(w, x, lambda, smooth_eps)?;
    let n = x.rows() as f64;
    let (value, act, resid) = rica_forward(w, x, lambda, smooth_eps)?;
    let mut soft = act.clone();
    for i in 0..soft.rows() {
        for v in soft.row_mut(i) {
            *v /= (*v * *v + smooth_eps).sqrt();
        }
    }

    // 2/n (Aᵀ R + W Rᵀ X) + λ/n Sᵀ X
    let at_r = act.transpose().matmul(&resid)?;
    let rt_x = resid.transpose().matmul(x)?;
    let w_rt_x = w.matmul(&rt_x)?;
    let st_x = soft.transpose().matmul(x)?;
    let grad = at_r
        .add(&w_rt_x)?
        .scale(2.0 / n)
        .add(&st_x.scale(lambda / n))?;
    Ok((value, grad))
}

/// Outcome of the RICA descent.
#[derive(Debug, Clone)]
pub struct RicaDescent {
    pub w: Matrix,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Gradient descent with Armijo backtracking from `w0`.
pub fn rica_descent(x: &Matrix, w0: Matrix, lambda: f64, smooth_eps: f64, max_iters: usize) -> Result<RicaDescent> {
    let (mut value, mut grad) = rica_objective_and_grad(&w0, x, lambda, smooth_eps)?;
    if !value.is_finite() || !grad.is_finite() {
        return Err(Error::Divergence(format!("initial RICA objective is {value}")));
    }
    let mut w = w0;
    let mut trace = vec![value];
    // first search starts at 1; later ones at twice the last accepted step
    let mut start = 1.0f64;
    for _ in 0..max_iters {
        let gsq: f64 = grad.as_slice().iter().map(|g| g * g).sum();
        if gsq == 0.0 {
            break;
        }
        let mut step = start;
        let accepted = loop {
            let trial = w.sub(&grad.scale(step))?;
            let tv = rica_objective(&trial, x, lambda, smooth_eps)?;
            if tv.is_finite() && tv <= value - 1e-4 * step * gsq {
                let (tv, tg) = rica_objective_and_grad(&trial, x, lambda, smooth_eps)?;
                if !tg.is_finite() {
                    return Err(Error::Divergence("non-finite RICA gradient".into()));
                }
                break Some((trial, tv, tg));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((trial, tv, tg)) = accepted else { break };
        start = (2.0 * step).min(1.0);
        let rel = (value - tv) / value.abs().max(f64::MIN_POSITIVE);
        w = trial;
        value = tv;
        grad = tg;
        trace.push(value);
        if rel < 1e-7 {
            break;
        }
    }
    if !value.is_finite() {
        return Err(Error::Divergence(format!("RICA objective became {value}")));
    }
    Ok(RicaDescent { w, trace })
}

/// Initial RICA weights: uniform in `[−0.01, 0.01]`.
pub fn rica_init(z: usize, d: usize, rng: &mut Rng) -> Matrix {
    let data = (0..z * d).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    Matrix::new(z, d, data).expect("finite init")
}

pub fn fit_rica(x: &Matrix, z: usize, lambda: f64, max_iters: usize, smooth_eps: f64, rng: &mut Rng) -> Result<ProjectionModel> {
    check_dim(z, x.cols())?;
    if x.rows() < 2 {
        return Err(Error::degenerate("RICA needs at least 2 instances"));
    }
    let mean_in = x.column_means();
    let xc = x.center_with(&mean_in);
    let w0 = rica_init(z, x.cols(), rng);
    let fit = rica_descent(&xc, w0, lambda, smooth_eps, max_iters)?;
    Ok(ProjectionModel::linear(Method::Rica, mean_in, fit.w.transpose(), z))
}

/// Fits `method` with output dimension `z` (clamped by the method's rank).
pub fn fit(method: Method, x: &Matrix, y: &[usize], z: usize, params: &ExtractorParams, rng: &mut Rng) -> Result<ProjectionModel> {
    let z = z.clamp(1, x.cols().max(1));
    match method {
        Method::Pca => fit_pca(x, z),
        Method::Fda => fit_fda(x, y, z, params.eps, params.diag_boost),
        Method::Gda => fit_gda(x, y, z, params.gda_kernel, params.gda_reg),
        Method::Rica => fit_rica(x, z, params.rica_lambda, params.rica_max_iters, params.rica_smooth_eps, rng),
    }
}

/// Maps rows of `x` (in the model's input space) to the model's output space.
pub fn project(m: &ProjectionModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != m.input_dim {
        return Err(Error::shape(format!(
            "{} model expects {} features, data has {}",
            m.method,
            m.input_dim,
            x.cols()
        )));
    }
    let sel = x.select_cols(&m.selected_features).center_with(&m.mean_in);
    match &m.kernel {
        None => sel.matmul(&m.weights),
        Some(k) => {
            let n_ret = k.points.rows();
            let mut rows = Matrix::zeros(sel.rows(), n_ret);
            for i in 0..sel.rows() {
                let q = sel.row(i);
                let out = rows.row_mut(i);
                for (j, o) in out.iter_mut().enumerate() {
                    *o = k.kind.eval(q, k.points.row(j));
                }
                let row_mean = out.iter().sum::<f64>() / n_ret as f64;
                for (o, cm) in out.iter_mut().zip(&k.col_means) {
                    *o += k.grand_mean - cm - row_mean;
                }
            }
            rows.matmul(&k.dual)
        }
    }
}
