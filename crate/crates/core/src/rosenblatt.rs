//! Kernel-density Rosenblatt transformation between an empirical
//! distribution on `R^d` and the unit hypercube.
//!
//! Dimension `k` of the forward map is the Nadaraya–Watson estimate of the
//! conditional CDF of `y_k` given `y_1..y_{k-1}`, using Gaussian kernels in
//! the conditioning coordinates and their integrals in `y_k`.

use crate::error::{check_dim, Error, Result};
use crate::normal;

/// Forward outputs are clamped to `[U_CLAMP, 1 - U_CLAMP]`.
pub const U_CLAMP: f64 = 1e-12;
pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 0.75;

const BISECT_U_TOL: f64 = 1e-10;
const BISECT_Y_REL_TOL: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: usize = 60;

#[derive(Debug, Clone)]
pub struct RosenblattMap {
    /// `M × d`, row-major.
    samples: Vec<f64>,
    n_samples: usize,
    dim: usize,
    bandwidths: Vec<f64>,
    bandwidth_factor: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Rule-of-thumb bandwidth `factor · 1.06 · σ · M^(-1/5)`, with a floor for
/// degenerate samples.
pub fn rule_of_thumb_bandwidth(values: &[f64], factor: f64) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt().max(f64::EPSILON * mean.abs() + 1e-300);
    factor * 1.06 * sd * m.powf(-0.2)
}

impl RosenblattMap {
    pub fn fit(samples: &[Vec<f64>], bandwidth_factor: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "Rosenblatt map needs at least two samples, got {}",
                samples.len()
            )));
        }
        if !(bandwidth_factor > 0.0 && bandwidth_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bandwidth factor must be positive, got {bandwidth_factor}"
            )));
        }
        let dim = samples[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("samples have zero dimension".into()));
        }
        let mut flat = Vec::with_capacity(samples.len() * dim);
        for (m, s) in samples.iter().enumerate() {
            check_dim("sample dimension", dim, s.len())?;
            if let Some(k) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("sample {m} has non-finite coordinate {k}")));
            }
            flat.extend_from_slice(s);
        }
        let n = samples.len();
        let mut bandwidths = Vec::with_capacity(dim);
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for k in 0..dim {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            bandwidths.push(rule_of_thumb_bandwidth(&col, bandwidth_factor));
            lo.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            hi.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Self {
            samples: flat,
            n_samples: n,
            dim,
            bandwidths,
            bandwidth_factor,
            lo,
            hi,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn bandwidth_factor(&self) -> f64 {
        self.bandwidth_factor
    }

    fn sample(&self, m: usize, k: usize) -> f64 {
        self.samples[m * self.dim + k]
    }

    /// Accumulates the log conditioning weight of dimension `k` at `y_k`.
    fn add_log_weights(&self, logw: &mut [f64], k: usize, yk: f64) {
        let h = self.bandwidths[k];
        for (m, lw) in logw.iter_mut().enumerate() {
            let z = (yk - self.sample(m, k)) / h;
            *lw -= 0.5 * z * z;
        }
    }

    /// Normalized weights from log weights.
    fn weights(logw: &[f64]) -> Vec<f64> {
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }

    fn conditional_cdf(&self, w: &[f64], k: usize, yk: f64) -> f64 {
        let h = self.bandwidths[k];
        w.iter()
            .enumerate()
            .filter(|(_, &wm)| wm > 0.0)
            .map(|(m, wm)| wm * normal::cdf((yk - self.sample(m, k)) / h))
            .sum()
    }

    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("point dimension", self.dim, y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("point has non-finite coordinates".into()));
        }
        let mut logw = vec![0.0; self.n_samples];
        let mut u = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let w = Self::weights(&logw);
            let c = self.conditional_cdf(&w, k, y[k]);
            u.push(c.clamp(U_CLAMP, 1.0 - U_CLAMP));
            self.add_log_weights(&mut logw, k, y[k]);
        }
        Ok(u)
    }

    /// Solves `forward(y) = u` dimension by dimension with bisection.
    pub fn inverse(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim("point dimension", self.dim, u.len())?;
        if let Some(k) = u.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain(format!(
                "Rosenblatt inverse needs u in (0,1), coordinate {k} is {}",
                u[k]
            )));
        }
        let mut logw = vec![0.0; self.n_samples];
        let mut y = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let w = Self::weights(&logw);
            let yk = self.solve_dim(&w, k, u[k])?;
            y.push(yk);
            self.add_log_weights(&mut logw, k, yk);
        }
        Ok(y)
    }

    fn solve_dim(&self, w: &[f64], k: usize, target: f64) -> Result<f64> {
        let h = self.bandwidths[k];
        let mut lo = self.lo[k] - 6.0 * h;
        let mut hi = self.hi[k] + 6.0 * h;
        let mut width = hi - lo;
        let mut n = 0;
        while self.conditional_cdf(w, k, lo) > target {
            if n == MAX_BRACKET_DOUBLINGS {
                return Err(Error::Numerical(format!("cannot bracket quantile {target} in dimension {k}")));
            }
            lo -= width;
            width *= 2.0;
            n += 1;
        }
        width = hi - lo;
        n = 0;
        while self.conditional_cdf(w, k, hi) < target {
            if n == MAX_BRACKET_DOUBLINGS {
                return Err(Error::Numerical(format!("cannot bracket quantile {target} in dimension {k}")));
            }
            hi += width;
            width *= 2.0;
            n += 1;
        }
        let ytol = BISECT_Y_REL_TOL * (hi - lo);
        loop {
            let mid = 0.5 * (lo + hi);
            let f = self.conditional_cdf(w, k, mid);
            if (f - target).abs() < BISECT_U_TOL || hi - lo < ytol || mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if f < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn normal_samples(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// Direct evaluation of the conditional CDF without log-space tricks.
    fn naive_forward(samples: &[Vec<f64>], h: &[f64], y: &[f64]) -> Vec<f64> {
        (0..y.len())
            .map(|k| {
                let mut num = 0.0;
                let mut den = 0.0;
                for s in samples {
                    let w: f64 = (0..k).map(|j| normal::pdf((y[j] - s[j]) / h[j])).product();
                    num += w * normal::cdf((y[k] - s[k]) / h[k]);
                    den += w;
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn bandwidth_formula() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let sd = 2.5f64.sqrt();
        let h = rule_of_thumb_bandwidth(&v, 0.75);
        assert!((h - 0.75 * 1.06 * sd * 5f64.powf(-0.2)).abs() < 1e-15);
        assert!(rule_of_thumb_bandwidth(&[3.0; 4], 1.0) > 0.0);
    }

    #[test]
    fn bandwidth_linear_in_factor() {
        let s = normal_samples(100, 2, 7);
        let a = RosenblattMap::fit(&s, 1.0).unwrap();
        let b = RosenblattMap::fit(&s, 0.5).unwrap();
        for k in 0..2 {
            assert!((b.bandwidths()[k] - 0.5 * a.bandwidths()[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_samples_and_tail() {
        let s: Vec<Vec<f64>> = (1..=50).flat_map(|i| [vec![i as f64 * 0.1], vec![-(i as f64) * 0.1]]).collect();
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        assert!((map.forward(&[0.0]).unwrap()[0] - 0.5).abs() < 0.02);
        assert!(map.forward(&[5.0 + 10.0 * map.bandwidths()[0]]).unwrap()[0] > 0.999);
    }

    #[test]
    fn forward_close_to_exact_normal_cdf() {
        let s = normal_samples(10_000, 1, 8);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let worst = (0..=400)
            .map(|i| -2.0 + 0.01 * i as f64)
            .map(|y| (map.forward(&[y]).unwrap()[0] - normal::cdf(y)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.02, "{worst}");
    }

    #[test]
    fn inverse_median_near_sample_median() {
        let s = normal_samples(1000, 1, 9);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let mut v: Vec<f64> = s.iter().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        let med = 0.5 * (v[499] + v[500]);
        assert!((map.inverse(&[0.5]).unwrap()[0] - med).abs() < 0.05);
    }

    #[test]
    fn strictly_increasing_on_grid() {
        let s = normal_samples(60, 3, 10);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let mut prev = 0.0;
        for i in 0..100 {
            let y = -3.0 + 0.06 * i as f64;
            let u = map.forward(&[0.3, -0.2, y]).unwrap()[2];
            assert!(u > prev, "grid point {i}");
            prev = u;
        }
    }

    #[test]
    fn pull_back_is_nearly_uniform() {
        let m = 400;
        let s = normal_samples(m, 2, 11);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        for k in 0..2 {
            let mut u: Vec<f64> = s.iter().map(|p| map.forward(p).unwrap()[k]).collect();
            u.sort_by(f64::total_cmp);
            let ks = u
                .iter()
                .enumerate()
                .map(|(i, v)| ((i + 1) as f64 / m as f64 - v).max(v - i as f64 / m as f64))
                .fold(0.0, f64::max);
            assert!(ks <= 1.63 / (m as f64).sqrt() + 0.05, "component {k}: {ks}");
        }
    }

    #[test]
    fn inverse_images_preserve_mean() {
        let m = 500;
        let s = normal_samples(m, 1, 12);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let mean_s = s.iter().map(|p| p[0]).sum::<f64>() / m as f64;
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let n = 10_000;
        let mean_i = (0..n)
            .map(|_| map.inverse(&[rng.random_range(1e-9..1.0)]).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean_i - mean_s).abs() < 4.0 / (m as f64).sqrt(), "{mean_i} vs {mean_s}");
    }

    #[test]
    fn matches_naive_conditional_cdf() {
        let s = normal_samples(40, 3, 1);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        for y in [[0.1, -0.4, 0.9], [1.2, 0.3, -0.2], [-0.5, -0.5, 0.0]] {
            let a = map.forward(&y).unwrap();
            let b = naive_forward(&s, map.bandwidths(), &y);
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-13, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn standard_normal_median() {
        let s = normal_samples(2000, 1, 2);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        assert!((map.forward(&[0.0]).unwrap()[0] - 0.5).abs() < 0.03);
        assert!((map.inverse(&[0.975]).unwrap()[0] - 1.96).abs() < 0.15);
    }

    #[test]
    fn round_trip_2d() {
        let s = normal_samples(200, 2, 3);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        for p in s.iter().take(20) {
            let u = map.forward(p).unwrap();
            let y = map.inverse(&u).unwrap();
            for k in 0..2 {
                assert!((y[k] - p[k]).abs() < 1e-6, "{p:?} -> {u:?} -> {y:?}");
            }
        }
    }

    #[test]
    fn far_point_is_clamped_and_finite() {
        let s = normal_samples(50, 2, 4);
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let u = map.forward(&[1e3, -1e3]).unwrap();
        assert_eq!(u[0], 1.0 - U_CLAMP);
        assert!(u.iter().all(|v| v.is_finite()));
        let y = map.inverse(&[U_CLAMP, 0.5]).unwrap();
        let min = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        assert!(y[0] < min - 5.0 * map.bandwidths()[0]);
    }

    #[test]
    fn degenerate_samples() {
        let s = vec![vec![2.0]; 10];
        let map = RosenblattMap::fit(&s, 0.75).unwrap();
        let y = map.inverse(&[0.3]).unwrap()[0];
        assert!((y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RosenblattMap::fit(&[], 0.75).is_err());
        assert!(RosenblattMap::fit(&[vec![1.0]], 0.75).is_err());
        assert!(RosenblattMap::fit(&[vec![1.0], vec![1.0, 2.0]], 0.75).is_err());
        assert!(RosenblattMap::fit(&[vec![f64::NAN], vec![0.0]], 0.75).is_err());
        let map = RosenblattMap::fit(&normal_samples(10, 1, 0), 0.75).unwrap();
        assert!(matches!(map.inverse(&[1.0]), Err(Error::Domain(_))));
        assert!(map.forward(&[0.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn forward_in_unit_cube_and_monotone_in_last(seed in 0u64..500, y0 in -3.0f64..3.0, a in -4.0f64..4.0, b in -4.0f64..4.0) {
            let s = normal_samples(30, 2, seed);
            let map = RosenblattMap::fit(&s, 0.75).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ul = map.forward(&[y0, lo]).unwrap();
            let uh = map.forward(&[y0, hi]).unwrap();
            for u in ul.iter().chain(&uh) {
                prop_assert!(*u >= U_CLAMP && *u <= 1.0 - U_CLAMP);
            }
            prop_assert!(ul[1] <= uh[1]);
        }

        #[test]
        fn inverse_round_trip(seed in 0u64..500, u0 in 0.01f64..0.99, u1 in 0.01f64..0.99) {
            let s = normal_samples(30, 2, seed);
            let map = RosenblattMap::fit(&s, 0.75).unwrap();
            let y = map.inverse(&[u0, u1]).unwrap();
            let u = map.forward(&y).unwrap();
            prop_assert!((u[0] - u0).abs() < 1e-9 && (u[1] - u1).abs() < 1e-9);
        }
    }
}
