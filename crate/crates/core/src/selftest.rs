//! Quick numerical self-checks run by the `selftest` command.

use rand::Rng as _;

use crate::classifiers::fit_knn;
use crate::feature_extraction::rica_objective_and_grad;
use crate::numerics::{generalized_eigen, norm, symmetric_eigen, Matrix};
use crate::rng::{derive, Rng};
use crate::sampling::{points_in_sphere, Hypersphere};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_symmetric(rng: &mut Rng, d: usize) -> Matrix {
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("finite")
}

fn eigen_check(seed: u64) -> Check {
    let mut rng = derive(seed, 1, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.gen_range(1..=20);
        let a = random_symmetric(&mut rng, d);
        let Ok(e) = symmetric_eigen(&a) else {
            return Check { name: "symmetric eigen residual", passed: false, detail: "solver failed".into() };
        };
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        for k in 0..d {
            let v = e.vectors.col(k);
            let av = a.mat_vec(&v).expect("square");
            let r: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - e.values[k] * y).collect();
            worst = worst.max(norm(&r) / scale);
        }
    }
    Check { name: "symmetric eigen residual", passed: worst <= 1e-8, detail: format!("max relative residual {worst:.2e}") }
}

fn generalized_check(seed: u64) -> Check {
    let mut rng = derive(seed, 2, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.gen_range(1..=10);
        let b = random_symmetric(&mut rng, d);
        let g = random_matrix(&mut rng, d, d);
        let w = g.matmul(&g.transpose()).expect("square").add(&Matrix::identity(d)).expect("same shape");
        let Ok(e) = generalized_eigen(&b, &w, 0.0) else {
            return Check { name: "generalized eigen residual", passed: false, detail: "solver failed".into() };
        };
        for k in 0..d {
            let v = e.vectors.col(k);
            let bv = b.mat_vec(&v).expect("square");
            let wv = w.mat_vec(&v).expect("square");
            let r: Vec<f64> = bv.iter().zip(&wv).map(|(x, y)| x - e.values[k] * y).collect();
            worst = worst.max(norm(&r) / (b.frobenius_norm() + w.frobenius_norm()) / norm(&v).max(1e-300));
        }
    }
    Check { name: "generalized eigen residual", passed: worst <= 1e-7, detail: format!("max relative residual {worst:.2e}") }
}

fn knn_check(seed: u64) -> Check {
    let mut rng = derive(seed, 3, 0);
    let mut mismatches = 0;
    for _ in 0..20 {
        let n = rng.gen_range(5..=100);
        let x = Matrix::new(n, 2, (0..2 * n).map(|_| rng.gen_range(0..3) as f64).collect()).expect("finite");
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let k = rng.gen_range(1..=n.min(7));
        let Ok(model) = fit_knn(&x, &y, k) else { continue };
        let q = random_matrix(&mut rng, 5, 2).scale(3.0);
        let got = model.predict(&q).expect("same width");
        for (i, g) in got.iter().enumerate() {
            let mut all: Vec<(f64, usize)> = (0..n)
                .map(|j| (x.row(j).iter().zip(q.row(i)).map(|(a, b)| (a - b) * (a - b)).sum(), j))
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = [0usize; 3];
            for &(_, j) in &all[..k] {
                votes[y[j]] += 1;
            }
            let top = *votes.iter().max().expect("non-empty");
            if votes.iter().position(|&v| v == top) != Some(*g) {
                mismatches += 1;
            }
        }
    }
    Check { name: "kNN vs exhaustive sort", passed: mismatches == 0, detail: format!("{mismatches} mismatches") }
}

fn sphere_check(seed: u64) -> Check {
    let mut rng = derive(seed, 4, 0);
    let x = random_matrix(&mut rng, 200, 3);
    let mut mismatches = 0;
    for _ in 0..20 {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rng.gen_range(0.0..1.5);
        let got = points_in_sphere(&x, &Hypersphere { center: c.clone(), radius: r }).expect("same width");
        let want: Vec<usize> = (0..200)
            .filter(|&i| x.row(i).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= r)
            .collect();
        mismatches += usize::from(got != want);
    }
    Check { name: "sphere membership vs scan", passed: mismatches == 0, detail: format!("{mismatches} mismatches") }
}

fn rica_check(seed: u64) -> Check {
    let mut rng = derive(seed, 5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (z, d, n) = (rng.gen_range(1..4), rng.gen_range(2..5), rng.gen_range(5..15));
        let w = random_matrix(&mut rng, z, d);
        let x = random_matrix(&mut rng, n, d);
        let lambda = rng.gen_range(0.0..1.0);
        let (_, g) = rica_objective_and_grad(&w, &x, lambda, 1e-8).expect("valid shapes");
        let h = 1e-5;
        let mut num = vec![0.0; z * d];
        for (k, slot) in num.iter_mut().enumerate() {
            let (i, j) = (k / d, k % d);
            let mut wp = w.clone();
            wp[(i, j)] += h;
            let mut wm = w.clone();
            wm[(i, j)] -= h;
            let fp = rica_objective_and_grad(&wp, &x, lambda, 1e-8).expect("valid").0;
            let fm = rica_objective_and_grad(&wm, &x, lambda, 1e-8).expect("valid").0;
            *slot = (fp - fm) / (2.0 * h);
        }
        let diff: Vec<f64> = g.as_slice().iter().zip(&num).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&num).max(1e-12));
    }
    Check { name: "RICA gradient vs finite differences", passed: worst <= 1e-4, detail: format!("max relative error {worst:.2e}") }
}

/// Runs every check with streams derived from `seed`.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![eigen_check(seed), generalized_check(seed), knn_check(seed), sphere_check(seed), rica_check(seed)]
}
