//! Hypersphere sampling machinery and the iteration schedule.
//!
//! The schedule starts from
//!
//! * `r = 0.1·σ̄`, `Δr = 0.3·σ̄` with `σ̄` the mean feature standard deviation,
//! * `n_s = clamp(⌊0.01·n⌋, 10, 20)` spheres,
//! * `p_τ = 1`, and keep counts `n_f = FE = ⌈0.9·d⌉`,
//!
//! and each later iteration applies `r += Δr`, `n_s -= ⌈0.2·n_s⌉` (floor 1),
//! `p_τ -= 0.05` (floor 0.2) and `n_f -= ⌈0.95·n_f⌉`, `FE -= ⌈0.95·FE⌉`
//! (floor `min(50, d)`).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::avg_feature_std;
use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};
use crate::rng::Rng;

pub const DEFAULT_ITERATIONS: usize = 5;

const KEEP_FLOOR: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypersphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Hypersphere {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!("invalid hypersphere radius {radius}")));
        }
        Ok(Self { center, radius })
    }
}

/// Control parameters of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub tau: usize,
    pub total: usize,
    pub radius: f64,
    pub delta_r: f64,
    pub sigma_bar: f64,
    pub n_spheres: usize,
    pub p_tau: f64,
    pub n_features: usize,
    pub fe_dim: usize,
}

/// `⌈num/den · v⌉` in integer arithmetic.
fn ceil_frac(v: usize, num: usize, den: usize) -> usize {
    (v * num).div_ceil(den)
}

impl ScheduleState {
    pub fn clamp_to(&mut self, current_d: usize) {
        let d = current_d.max(1);
        self.n_features = self.n_features.clamp(1, d);
        self.fe_dim = self.fe_dim.clamp(1, d);
    }
}

/// First-iteration schedule for `x` (rows are instances).
pub fn init_schedule(x: &Matrix, total: usize) -> Result<ScheduleState> {
    if total < 1 {
        return Err(Error::param("iteration count must be at least 1"));
    }
    let sigma_bar = avg_feature_std(x)?;
    if sigma_bar <= 0.0 {
        return Err(Error::degenerate("every feature is constant"));
    }
    let (n, d) = x.shape();
    let n_spheres = (n / 100).clamp(10, 20).min(n);
    let keep = ceil_frac(d, 9, 10);
    let mut s = ScheduleState {
        tau: 1,
        total,
        radius: 0.1 * sigma_bar,
        delta_r: 0.3 * sigma_bar,
        sigma_bar,
        n_spheres,
        p_tau: 1.0,
        n_features: keep,
        fe_dim: keep,
    };
    s.clamp_to(d);
    Ok(s)
}

/// Schedule for the next iteration when the data currently has `current_d`
/// features.
pub fn advance_schedule(s: &ScheduleState, current_d: usize) -> ScheduleState {
    let floor = KEEP_FLOOR.min(current_d);
    // p_τ in hundredths so repeated 0.05 steps land exactly on the floor
    let p_hundredths = ((s.p_tau * 100.0).round() as i64 - 5).max(20);
    let mut next = ScheduleState {
        tau: s.tau + 1,
        total: s.total,
        radius: s.radius + s.delta_r,
        delta_r: s.delta_r,
        sigma_bar: s.sigma_bar,
        n_spheres: s.n_spheres.saturating_sub(ceil_frac(s.n_spheres, 1, 5)).max(1),
        p_tau: p_hundredths as f64 / 100.0,
        n_features: s.n_features.saturating_sub(ceil_frac(s.n_features, 19, 20)).max(floor),
        fe_dim: s.fe_dim.saturating_sub(ceil_frac(s.fe_dim, 19, 20)).max(floor),
    };
    next.clamp_to(current_d);
    next
}

/// Centers drawn uniformly from the per-feature bounding box of `x`.
pub fn draw_centers(x: &Matrix, n_spheres: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let d = x.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in x.row_iter() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    (0..n_spheres)
        .map(|_| {
            (0..d)
                .map(|j| {
                    let u: f64 = rng.gen();
                    (lo[j] + u * (hi[j] - lo[j])).min(hi[j])
                })
                .collect()
        })
        .collect()
}

/// Centers placed on `n_spheres` distinct training rows chosen uniformly.
pub fn draw_centers_on_data(x: &Matrix, n_spheres: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let k = n_spheres.min(x.rows());
    let mut rows = rand::seq::index::sample(rng, x.rows(), k).into_vec();
    rows.sort_unstable();
    rows.into_iter().map(|i| x.row(i).to_vec()).collect()
}

/// Indices of rows within distance `radius` of the center, boundary included.
pub fn points_in_sphere(x: &Matrix, h: &Hypersphere) -> Result<Vec<usize>> {
    if h.center.len() != x.cols() {
        return Err(Error::shape(format!(
            "sphere center has {} coordinates, data has {} features",
            h.center.len(),
            x.cols()
        )));
    }
    Ok(x.row_iter()
        .enumerate()
        .filter(|(_, r)| squared_distance(r, &h.center).sqrt() <= h.radius)
        .map(|(i, _)| i)
        .collect())
}

/// Per-class sample without replacement of `⌈p·count⌉` members of
/// `indices`. Output is sorted ascending.
pub fn stratified_sample(indices: &[usize], y: &[usize], p: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("sampling fraction must be in (0, 1], got {p}")));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        strata.entry(y[i]).or_default().push(i);
    }
    let mut out = Vec::with_capacity(indices.len());
    for members in strata.values_mut() {
        let take = ((p * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let take = take.min(members.len());
        if take == members.len() {
            out.extend_from_slice(members);
        } else {
            out.extend(members.choose_multiple(rng, take).copied());
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn standardized_like(n: usize, d: usize) -> Matrix {
        // alternating ±1 columns: every column has the same std
        let data = (0..n * d).map(|k| if (k / d) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        Matrix::new(n, d, data).unwrap()
    }

    #[test]
    fn init_iris_shape() {
        let x = standardized_like(150, 4);
        let sigma = avg_feature_std(&x).unwrap();
        let s = init_schedule(&x, 5).unwrap();
        assert!((s.radius - 0.1 * sigma).abs() < 1e-15);
        assert_eq!(s.n_spheres, 10);
        assert_eq!(s.p_tau, 1.0);
        assert_eq!(s.n_features, 4);
        assert_eq!(s.fe_dim, 4);
    }

    #[test]
    fn init_sphere_count_clips_high() {
        let x = standardized_like(3000, 2);
        assert_eq!(init_schedule(&x, 5).unwrap().n_spheres, 20);
        let x = standardized_like(6, 2);
        assert_eq!(init_schedule(&x, 5).unwrap().n_spheres, 6);
    }

    #[test]
    fn init_radius_scales_with_sigma() {
        // column std exactly 2: values 0,0,... and 4? use ±2 pattern around mean
        let data: Vec<f64> = (0..4).map(|k| [-2.0, 2.0, -2.0, 2.0][k] * (3.0f64 / 4.0).sqrt()).collect();
        let x = Matrix::new(4, 1, data).unwrap();
        let s = init_schedule(&x, 5).unwrap();
        assert!((s.sigma_bar - 2.0).abs() < 1e-12);
        assert!((s.radius - 0.2).abs() < 1e-12);
        assert!((s.delta_r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn init_rejects_constant_data() {
        let x = Matrix::new(3, 2, vec![1.0; 6]).unwrap();
        assert!(matches!(init_schedule(&x, 5), Err(Error::DegenerateInput(_))));
    }

    fn state(n_spheres: usize, n_features: usize, fe_dim: usize) -> ScheduleState {
        ScheduleState {
            tau: 1,
            total: 5,
            radius: 0.1,
            delta_r: 0.3,
            sigma_bar: 1.0,
            n_spheres,
            p_tau: 1.0,
            n_features,
            fe_dim,
        }
    }

    #[test]
    fn advance_examples() {
        let s = advance_schedule(&state(10, 555, 555), 617);
        assert_eq!(s.n_spheres, 8);
        assert_eq!(s.n_features, 50);
        assert_eq!(s.fe_dim, 50);
        assert_eq!(s.p_tau, 0.95);
        assert!((s.radius - 0.4).abs() < 1e-15);
        assert_eq!(s.tau, 2);

        let mut s = state(10, 4, 4);
        for _ in 0..16 {
            s = advance_schedule(&s, 4);
        }
        assert_eq!(s.p_tau, 0.2);
        assert_eq!(advance_schedule(&s, 4).p_tau, 0.2);
        assert_eq!(s.n_features, 4);
        assert_eq!(s.n_spheres, 1);
    }

    proptest! {
        #[test]
        fn advance_is_monotone(ns in 1usize..40, nf in 1usize..700, d in 1usize..700, steps in 1usize..20) {
            let mut s = state(ns, nf.min(d), nf.min(d));
            for _ in 0..steps {
                let next = advance_schedule(&s, d);
                prop_assert!(next.radius > s.radius);
                prop_assert!(next.n_spheres <= s.n_spheres && next.n_spheres >= 1);
                prop_assert!(next.p_tau <= s.p_tau && next.p_tau >= 0.2);
                prop_assert!(next.n_features >= 50.min(d) && next.n_features <= d);
                prop_assert!(next.fe_dim >= 50.min(d) && next.fe_dim <= d);
                prop_assert!(next.n_features <= s.n_features.max(50.min(d)));
                s = next;
            }
        }
    }

    #[test]
    fn centers_stay_in_range_and_are_reproducible() {
        let mut r = seeded(1);
        let data: Vec<f64> = (0..60).map(|_| r.gen::<f64>()).collect();
        let x = Matrix::new(20, 3, data).unwrap();
        let a = draw_centers(&x, 15, &mut seeded(42));
        let b = draw_centers(&x, 15, &mut seeded(42));
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));

        let single = Matrix::from_rows(&[[3.0, -1.0]]).unwrap();
        for c in draw_centers(&single, 4, &mut seeded(0)) {
            assert_eq!(c, vec![3.0, -1.0]);
        }
    }

    #[test]
    fn sphere_membership_cases() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [3.0, 4.0]]).unwrap();
        let h = Hypersphere::new(vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(points_in_sphere(&x, &h).unwrap(), vec![0, 2]);
        let h = Hypersphere::new(vec![0.0, 0.0], 5.0).unwrap();
        assert_eq!(points_in_sphere(&x, &h).unwrap(), vec![0, 1, 2, 3]);
        let h = Hypersphere::new(vec![0.0], 5.0).unwrap();
        assert!(points_in_sphere(&x, &h).is_err());
    }

    #[test]
    fn sphere_matches_exhaustive_scan() {
        let mut r = seeded(7);
        let data: Vec<f64> = (0..40).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = Matrix::new(20, 2, data).unwrap();
        for _ in 0..50 {
            let c = vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
            let rad = r.gen_range(0.0..1.5);
            let oracle: Vec<usize> = (0..20)
                .filter(|&i| ((x[(i, 0)] - c[0]).powi(2) + (x[(i, 1)] - c[1]).powi(2)).sqrt() <= rad)
                .collect();
            let h = Hypersphere::new(c, rad).unwrap();
            assert_eq!(points_in_sphere(&x, &h).unwrap(), oracle);
        }
    }

    #[test]
    fn stratified_examples() {
        let y = [0, 0, 1, 1];
        let s = stratified_sample(&[0, 1, 2, 3], &y, 0.5, &mut seeded(3)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().filter(|&&i| y[i] == 0).count(), 1);

        let s = stratified_sample(&[0, 1, 2, 3], &y, 1.0, &mut seeded(3)).unwrap();
        assert_eq!(s, vec![0, 1, 2, 3]);

        let y = [0, 0, 0, 1];
        let s = stratified_sample(&[0, 1, 2, 3], &y, 0.5, &mut seeded(3)).unwrap();
        assert_eq!(s.iter().filter(|&&i| y[i] == 0).count(), 2);
        assert_eq!(s.iter().filter(|&&i| y[i] == 1).count(), 1);

        assert!(stratified_sample(&[], &y, 0.5, &mut seeded(3)).unwrap().is_empty());
        assert!(stratified_sample(&[0], &y, 0.0, &mut seeded(3)).is_err());
    }

    proptest! {
        #[test]
        fn stratified_is_subset_preserving_classes(
            labels in proptest::collection::vec(0usize..4, 1..60),
            p in 0.01f64..=1.0,
            seed in any::<u64>(),
        ) {
            let idx: Vec<usize> = (0..labels.len()).filter(|i| i % 3 != 1).collect();
            let s = stratified_sample(&idx, &labels, p, &mut seeded(seed)).unwrap();
            prop_assert!(s.iter().all(|i| idx.contains(i)));
            let before: std::collections::BTreeSet<usize> = idx.iter().map(|&i| labels[i]).collect();
            let after: std::collections::BTreeSet<usize> = s.iter().map(|&i| labels[i]).collect();
            prop_assert_eq!(before, after);
            prop_assert_eq!(s.clone(), stratified_sample(&idx, &labels, p, &mut seeded(seed)).unwrap());
        }
    }
}
